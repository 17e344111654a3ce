//! Gaussian-process regression over mask parameters and the
//! acquisition-driven refinement loop built on it.

mod kernel;
mod refine;
mod state;

pub use kernel::{matern_kernel, IndexPoint, KernelParams, Smoothness};
pub use refine::{
    candidates, extract_map, observe_saliency, refine, select_next, ObservationContext,
    RefineConfig, RefineOutcome,
};
pub use state::{acquisition, GpState, PriorMean};
