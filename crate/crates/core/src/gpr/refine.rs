use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpr::kernel::{IndexPoint, KernelParams};
use crate::gpr::state::{acquisition, GpState, PriorMean};
use crate::masking::{apply, flip, render};
use crate::volume::{
    checked_evaluate, normalize_saliency, Classifier, Dims, ImageVolume, Label, SaliencyVolume,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub n_iters: usize,
    /// Mask side lengths.
    pub sizes: Vec<usize>,
    /// Mask frame spans; `[1]` for stills.
    pub spans: Vec<usize>,
    pub kappa: f64,
    /// Pixel stride of the acquisition grid; `None` picks 2 up to 64 px and 4 above.
    pub candidate_stride: Option<usize>,
    /// Observe `M(i ⊙ m̄) − M(i ⊙ m)` instead of `M(i) − M(i ⊙ m)`.
    pub use_flip: bool,
    /// Weight each size/span by the reciprocal of the mask volume when extracting the map.
    pub weighted_avg: bool,
    pub use_prior: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self::borex()
    }
}

impl RefineConfig {
    pub fn borex() -> Self {
        Self {
            n_iters: 50,
            sizes: vec![5, 9, 13],
            spans: vec![1],
            kappa: 2.0,
            candidate_stride: None,
            use_flip: true,
            weighted_avg: true,
            use_prior: true,
        }
    }

    /// The unrefined Bayesian-optimization baseline: zero prior, plain
    /// occlusion drop, simple average.
    pub fn baseline() -> Self {
        Self {
            use_flip: false,
            weighted_avg: false,
            use_prior: false,
            ..Self::borex()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(Error::Config("sizes must be non-empty and >= 1".into()));
        }
        if self.spans.is_empty() || self.spans.contains(&0) {
            return Err(Error::Config("spans must be non-empty and >= 1".into()));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::Config(format!(
                "kappa must be >= 0, got {}",
                self.kappa
            )));
        }
        if self.candidate_stride == Some(0) {
            return Err(Error::Config("candidate_stride must be >= 1".into()));
        }
        Ok(())
    }

    pub fn stride_for(&self, dims: Dims) -> usize {
        self.candidate_stride
            .unwrap_or(if dims.height.max(dims.width) <= 64 {
                2
            } else {
                4
            })
    }

    fn sorted_sizes(&self) -> Vec<usize> {
        let mut v = self.sizes.clone();
        v.sort_unstable();
        v.dedup();
        v
    }

    fn sorted_spans(&self) -> Vec<usize> {
        let mut v = self.spans.clone();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Grid coordinates `0, s, 2s, …` along an axis, always including the last cell.
fn axis_grid(len: usize, stride: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..len).step_by(stride).collect();
    if *v.last().unwrap() != len - 1 {
        v.push(len - 1);
    }
    v
}

/// Every acquisition candidate in lexicographic `(frame, row, col, side, span)` order.
pub fn candidates(cfg: &RefineConfig, dims: Dims) -> Vec<IndexPoint> {
    let stride = cfg.stride_for(dims);
    let rows = axis_grid(dims.height, stride);
    let cols = axis_grid(dims.width, stride);
    let sizes = cfg.sorted_sizes();
    let spans = cfg.sorted_spans();
    let mut out =
        Vec::with_capacity(dims.frames * rows.len() * cols.len() * sizes.len() * spans.len());
    for frame in 0..dims.frames {
        for &row in &rows {
            for &col in &cols {
                for &side in &sizes {
                    for &span in &spans {
                        out.push(IndexPoint {
                            frame,
                            row,
                            col,
                            side,
                            span,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Argmax of the acquisition over the candidate grid; ties go to the
/// lexicographically smallest candidate.
pub fn select_next(state: &GpState, cfg: &RefineConfig, dims: Dims) -> Result<IndexPoint> {
    let cands = candidates(cfg, dims);
    let scores: Vec<f64> = cands
        .par_iter()
        .map(|q| acquisition(state, q, cfg.kappa))
        .collect();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    if scores.is_empty() {
        return Err(Error::Config("empty candidate set".into()));
    }
    Ok(cands[best])
}

/// Caches `M(i, l)` for the baseline observation rule.
#[derive(Debug, Default)]
pub struct ObservationContext {
    full_confidence: Option<f64>,
    pub calls: usize,
}

/// Observed saliency of the mask described by `x`:
/// `M(i ⊙ m̄, l) − M(i ⊙ m, l)` with flipping, `M(i, l) − M(i ⊙ m, l)` without.
pub fn observe_saliency(
    model: &dyn Classifier,
    image: &ImageVolume,
    label: &Label,
    x: &IndexPoint,
    use_flip: bool,
    fill: f64,
    ctx: &mut ObservationContext,
) -> Result<f64> {
    let mask = render(&x.mask_spec(), image.dims())?;
    let hidden = apply(image, &mask, fill)?;
    let context = || format!("observation at {x:?}");
    if use_flip {
        let only = apply(image, &flip(&mask), fill)?;
        let out = checked_evaluate(model, &[&only, &hidden], label)
            .map_err(|e| Error::classifier(context(), e))?;
        ctx.calls += 2;
        Ok(out[0] - out[1])
    } else {
        let full = match ctx.full_confidence {
            Some(v) => v,
            None => {
                let v = checked_evaluate(model, &[image], label)
                    .map_err(|e| Error::classifier("unmasked image", e))?[0];
                ctx.calls += 1;
                ctx.full_confidence = Some(v);
                v
            }
        };
        let out = checked_evaluate(model, &[&hidden], label)
            .map_err(|e| Error::classifier(context(), e))?;
        ctx.calls += 1;
        Ok(full - out[0])
    }
}

fn size_weight(cfg: &RefineConfig, side: usize, span: usize) -> f64 {
    if cfg.weighted_avg {
        1.0 / ((side * side * span) as f64)
    } else {
        1.0
    }
}

/// Combines posterior means over sizes and spans into one map:
/// `(1 / (|L|·|T|)) Σ_r Σ_t w(r, t) μ(λ, r, t)` with `w = 1/(r²t)` in weighted
/// mode and `1` otherwise.
///
/// Posterior means are queried on the candidate grid only. Off-grid cells
/// bilinearly interpolate the data-driven part `μ − μ₀` and add the prior
/// mean `μ₀` back exactly, so the prior's per-pixel detail survives any stride.
pub fn extract_map(state: &GpState, cfg: &RefineConfig, dims: Dims) -> Result<SaliencyVolume> {
    cfg.validate()?;
    let stride = cfg.stride_for(dims);
    let rows = axis_grid(dims.height, stride);
    let cols = axis_grid(dims.width, stride);
    let sizes = cfg.sorted_sizes();
    let spans = cfg.sorted_spans();
    let norm = 1.0 / (sizes.len() * spans.len()) as f64;

    let mut grid_points = Vec::with_capacity(dims.frames * rows.len() * cols.len());
    for n in 0..dims.frames {
        for &y in &rows {
            for &x in &cols {
                grid_points.push((n, y, x));
            }
        }
    }
    let grid: Vec<f64> = grid_points
        .par_iter()
        .map(|&(frame, row, col)| {
            let mut acc = 0.0;
            for &side in &sizes {
                for &span in &spans {
                    let q = IndexPoint {
                        frame,
                        row,
                        col,
                        side,
                        span,
                    };
                    let correction = state.posterior(&q).0 - state.prior().at(&q);
                    acc += size_weight(cfg, side, span) * correction;
                }
            }
            acc * norm
        })
        .collect();

    let (gr, gc) = (rows.len(), cols.len());
    let at = |n: usize, i: usize, j: usize| grid[(n * gr + i) * gc + j];
    // Bracketing grid index and interpolation weight for each pixel coordinate.
    let bracket = |axis: &[usize], v: usize| -> (usize, usize, f64) {
        let hi = axis.partition_point(|&a| a < v);
        if axis[hi] == v {
            return (hi, hi, 0.0);
        }
        let lo = hi - 1;
        let w = (v - axis[lo]) as f64 / (axis[hi] - axis[lo]) as f64;
        (lo, hi, w)
    };
    let row_b: Vec<_> = (0..dims.height).map(|y| bracket(&rows, y)).collect();
    let col_b: Vec<_> = (0..dims.width).map(|x| bracket(&cols, x)).collect();
    let prior_weight = norm
        * sizes
            .iter()
            .flat_map(|&r| spans.iter().map(move |&t| size_weight(cfg, r, t)))
            .sum::<f64>();
    let mut values = Vec::with_capacity(dims.cells());
    for n in 0..dims.frames {
        for &(y0, y1, wy) in &row_b {
            for &(x0, x1, wx) in &col_b {
                let v = if wy == 0.0 && wx == 0.0 {
                    at(n, y0, x0)
                } else {
                    (1.0 - wy) * ((1.0 - wx) * at(n, y0, x0) + wx * at(n, y0, x1))
                        + wy * ((1.0 - wx) * at(n, y1, x0) + wx * at(n, y1, x1))
                };
                let prior = state.prior().at(&IndexPoint {
                    frame: n,
                    row: values.len() / dims.width % dims.height,
                    col: values.len() % dims.width,
                    side: 1,
                    span: 1,
                });
                values.push(prior_weight * prior + v);
            }
        }
    }
    SaliencyVolume::new(dims, values)
}

/// Result of a refinement run with its trace.
#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub map: SaliencyVolume,
    pub observations: Vec<(IndexPoint, f64)>,
    pub classifier_calls: usize,
}

/// Gaussian-process refinement of a saliency map.
///
/// The prior mean is the max-abs normalized `prior` (when `cfg.use_prior`)
/// or zero. Each of the `n_iters` rounds selects the acquisition argmax,
/// observes the masked confidence gap there and conditions the GP on it.
pub fn refine(
    model: &dyn Classifier,
    image: &ImageVolume,
    prior: Option<&SaliencyVolume>,
    label: &Label,
    cfg: &RefineConfig,
    kernel: &KernelParams,
    fill: f64,
) -> Result<RefineOutcome> {
    cfg.validate()?;
    let dims = image.dims();
    let prior_mean = if cfg.use_prior {
        let p = prior
            .ok_or_else(|| Error::Config("use_prior is set but no prior map was given".into()))?;
        if p.dims() != dims {
            return Err(Error::Shape(format!(
                "prior {} does not match image {dims}",
                p.dims()
            )));
        }
        PriorMean::Map(Arc::new(normalize_saliency(p)?))
    } else {
        PriorMean::Zero
    };
    let mut state = GpState::new(*kernel, prior_mean)?;
    let mut ctx = ObservationContext::default();
    for _ in 0..cfg.n_iters {
        let x = select_next(&state, cfg, dims)?;
        let s = observe_saliency(model, image, label, &x, cfg.use_flip, fill, &mut ctx)?;
        state.observe(x, s)?;
    }
    Ok(RefineOutcome {
        map: extract_map(&state, cfg, dims)?,
        observations: state.observations().collect(),
        classifier_calls: ctx.calls,
    })
}
