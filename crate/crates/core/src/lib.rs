//! Black-box saliency maps for image and video classifiers.
//!
//! * [`mc`]: Monte-Carlo occlusion estimators (RISE, PN-RISE).
//! * [`gpr`]: Gaussian-process refinement of an existing saliency map.
//! * [`metrics`]: insertion, deletion and F-measure curves plus a one-sided
//!   Wilcoxon signed-rank test.
//! * [`harness`]: synthetic and external classifiers, experiment runner,
//!   heatmap rendering.

pub mod dataset;
pub mod error;
pub mod gpr;
pub mod harness;
pub mod masking;
pub mod mc;
pub mod metrics;
pub mod volume;

pub use error::{ClassifierError, Error, Result};
pub use volume::{
    normalize_saliency, Classifier, DatasetItem, Dims, ImageVolume, Label, RegionVolume,
    SaliencyVolume,
};
