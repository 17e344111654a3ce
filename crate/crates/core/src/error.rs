use std::path::PathBuf;

use thiserror::Error;

/// Failure reported by a classifier port.
#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("confidence {value} for request {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("classifier did not answer within {0:?}")]
    Timeout(std::time::Duration),
    #[error("classifier process exited with status {0}")]
    NonZeroExit(i32),
    #[error("classifier io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid saliency map: {0}")]
    InvalidSaliency(String),
    #[error("invalid volume: {0}")]
    InvalidVolume(String),
    #[error("manifest {path}:{line}: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("tensor file {path}: {message}")]
    TensorFormat { path: PathBuf, message: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("mask center {center:?} outside volume {shape:?}")]
    OutOfBounds {
        center: (usize, usize, usize),
        shape: (usize, usize, usize),
    },
    #[error("classifier failed ({context}): {source}")]
    Classifier {
        context: String,
        #[source]
        source: ClassifierError,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("ground-truth region is empty")]
    EmptyRegion,
    #[error("all paired differences are zero")]
    DegenerateSample,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("run failed: {failed} of {total} items failed")]
    RunFailed { failed: usize, total: usize },
    #[error("png encoding: {0}")]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn classifier(context: impl Into<String>, source: ClassifierError) -> Self {
        Error::Classifier {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
