//! Everything needed to run experiments end to end: configuration,
//! classifiers, synthetic datasets, the runner and artifact emission.

pub mod config;
pub mod counting;
pub mod experiment;
pub mod external;
pub mod heatmap;
pub mod synth_data;
pub mod synthetic;

pub use config::{ClassifierSpec, Method, RunConfig, SyntheticKind};
pub use counting::CountingClassifier;
pub use experiment::{evaluate_items, run_experiment, EvalReport, ItemResult, PairedTest};
pub use external::ExternalClassifier;
pub use heatmap::emit_heatmap;
pub use synthetic::SyntheticClassifier;
