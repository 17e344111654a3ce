//! Saliency-map quality metrics and the paired significance test.

mod curves;
mod wilcoxon;

pub use curves::{
    deletion, f_measure, insertion, saliency_ranking, step_count, top_set, CurveResult,
};
pub use wilcoxon::{
    average_ranks, exact_upper_tail, normal_upper_tail, wilcoxon_one_sided, WilcoxonMethod,
    WilcoxonResult, EXACT_LIMIT,
};
