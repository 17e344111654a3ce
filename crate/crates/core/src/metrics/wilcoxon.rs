//! One-sided Wilcoxon signed-rank test for paired samples.
//!
//! The alternative hypothesis is that the first element of each pair is
//! stochastically greater than the second. Zero differences are dropped and
//! tied magnitudes share their average rank.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Largest sample size that uses the exact null distribution.
pub const EXACT_LIMIT: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WilcoxonMethod {
    Exact,
    NormalApprox,
}

impl WilcoxonMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::NormalApprox => "normal_approx",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    pub n_effective: usize,
    /// Sum of the ranks of positive differences.
    pub statistic: f64,
    pub p_value: f64,
    pub method: WilcoxonMethod,
}

/// Average ranks (1-based) of `values` sorted ascending.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Nonzero differences with their absolute-value ranks.
fn signed_ranks(pairs: &[(f64, f64)]) -> Result<(Vec<f64>, Vec<f64>)> {
    if pairs.is_empty() {
        return Err(Error::Config(
            "wilcoxon test needs at least one pair".into(),
        ));
    }
    if pairs.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(Error::Config("wilcoxon samples must be finite".into()));
    }
    let diffs: Vec<f64> = pairs
        .iter()
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Err(Error::DegenerateSample);
    }
    let ranks = average_ranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
    Ok((diffs, ranks))
}

/// `P[W ≥ observed]` under the null, by dynamic programming over doubled
/// (hence integral) ranks: each rank joins the positive sum with probability 1/2.
pub fn exact_upper_tail(ranks: &[f64], observed: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for w in (0..=reach).rev() {
            if counts[w] != 0.0 {
                counts[w + r] += counts[w];
            }
        }
        reach += r;
    }
    let threshold = (2.0 * observed).round() as usize;
    let tail: f64 = counts[threshold.min(total + 1)..].iter().sum();
    tail / 2f64.powi(ranks.len() as i32)
}

/// Normal approximation with tie-corrected variance and a 0.5 continuity correction.
pub fn normal_upper_tail(ranks: &[f64], observed: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|r| **r == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return if observed >= mean { 0.5 } else { 1.0 };
    }
    let z = (observed - mean - 0.5) / var.sqrt();
    (0.5 * erfc(z / std::f64::consts::SQRT_2)).clamp(0.0, 1.0)
}

/// Tests whether `a` is stochastically greater than `b` across `pairs = [(a, b)]`.
pub fn wilcoxon_one_sided(pairs: &[(f64, f64)]) -> Result<WilcoxonResult> {
    let (diffs, ranks) = signed_ranks(pairs)?;
    let statistic: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let n = diffs.len();
    let (p_value, method) = if n <= EXACT_LIMIT {
        (exact_upper_tail(&ranks, statistic), WilcoxonMethod::Exact)
    } else {
        (
            normal_upper_tail(&ranks, statistic),
            WilcoxonMethod::NormalApprox,
        )
    };
    Ok(WilcoxonResult {
        n_effective: n,
        statistic,
        p_value: p_value.min(1.0),
        method,
    })
}
