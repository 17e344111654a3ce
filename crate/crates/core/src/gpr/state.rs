use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gpr::kernel::{matern_kernel, IndexPoint, KernelParams};
use crate::volume::SaliencyVolume;

/// Prior mean over the search space. A map prior is broadcast over every
/// side length and span: `μ(frame, row, col, r, t) = map(frame, row, col)`.
#[derive(Debug, Clone, Default)]
pub enum PriorMean {
    #[default]
    Zero,
    Map(Arc<SaliencyVolume>),
}

impl PriorMean {
    #[inline]
    pub fn at(&self, q: &IndexPoint) -> f64 {
        match self {
            PriorMean::Zero => 0.0,
            PriorMean::Map(m) => m.get(q.frame, q.row, q.col),
        }
    }
}

/// Largest extra diagonal tried when a pivot is not positive, relative to the signal variance.
const MAX_JITTER: f64 = 1e-4;
const FIRST_JITTER: f64 = 1e-10;

/// Gaussian-process posterior over observed `(IndexPoint, saliency)` pairs.
///
/// Holds the lower Cholesky factor `L` of `K + σ_n² I (+ jitter)` and the
/// whitened residuals `L⁻¹ (s − μ(X))`, both extended in place by `observe`.
#[derive(Debug, Clone)]
pub struct GpState {
    kernel: KernelParams,
    prior: PriorMean,
    points: Vec<IndexPoint>,
    observed: Vec<f64>,
    jitter: Vec<f64>,
    /// Row `i` holds `L[i][0..=i]`.
    factor: Vec<Vec<f64>>,
    whitened: Vec<f64>,
}

impl GpState {
    pub fn new(kernel: KernelParams, prior: PriorMean) -> Result<Self> {
        kernel.validate()?;
        Ok(Self {
            kernel,
            prior,
            points: Vec::new(),
            observed: Vec::new(),
            jitter: Vec::new(),
            factor: Vec::new(),
            whitened: Vec::new(),
        })
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn prior(&self) -> &PriorMean {
        &self.prior
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn observations(&self) -> impl Iterator<Item = (IndexPoint, f64)> + '_ {
        self.points
            .iter()
            .copied()
            .zip(self.observed.iter().copied())
    }

    pub fn points(&self) -> &[IndexPoint] {
        &self.points
    }

    /// Extra diagonal added for each observation beyond the noise variance.
    pub fn jitter(&self) -> &[f64] {
        &self.jitter
    }

    /// Dense copy of the lower-triangular factor.
    pub fn factor_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        self.factor
            .iter()
            .map(|row| {
                let mut full = row.clone();
                full.resize(n, 0.0);
                full
            })
            .collect()
    }

    fn cross_covariance(&self, q: &IndexPoint) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| matern_kernel(p, q, &self.kernel))
            .collect()
    }

    /// Solves `L v = b` in place.
    fn forward_solve(&self, b: &mut [f64]) {
        for (i, row) in self.factor.iter().enumerate() {
            let dot: f64 = row[..i].iter().zip(&b[..i]).map(|(l, v)| l * v).sum();
            b[i] = (b[i] - dot) / row[i];
        }
    }

    /// Posterior `(mean, variance)` at `q`. Variance is clamped at zero.
    pub fn posterior(&self, q: &IndexPoint) -> (f64, f64) {
        let prior = self.prior.at(q);
        let kqq = self.kernel.signal_var;
        if self.points.is_empty() {
            return (prior, kqq);
        }
        let mut v = self.cross_covariance(q);
        self.forward_solve(&mut v);
        let mean = prior
            + v.iter()
                .zip(&self.whitened)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        let var = kqq - v.iter().map(|a| a * a).sum::<f64>();
        (mean, var.max(0.0))
    }

    /// Appends one observation and extends the factor by one row.
    pub fn observe(&mut self, x: IndexPoint, s: f64) -> Result<()> {
        if !s.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite observation {s} at {x:?}"
            )));
        }
        let mut row = self.cross_covariance(&x);
        self.forward_solve(&mut row);
        let base =
            self.kernel.signal_var + self.kernel.noise_var - row.iter().map(|l| l * l).sum::<f64>();
        let (pivot, jitter) = self.positive_pivot(base, &x)?;
        let residual = s - self.prior.at(&x);
        let dot: f64 = row.iter().zip(&self.whitened).map(|(l, w)| l * w).sum();
        self.whitened.push((residual - dot) / pivot);
        row.push(pivot);
        self.factor.push(row);
        self.points.push(x);
        self.observed.push(s);
        self.jitter.push(jitter);
        Ok(())
    }

    /// Square root of the Schur complement, escalating a diagonal jitter ×10
    /// from `1e-10 σ²` up to `1e-4 σ²` while it is not positive.
    fn positive_pivot(&self, schur: f64, x: &IndexPoint) -> Result<(f64, f64)> {
        if schur > 0.0 {
            return Ok((schur.sqrt(), 0.0));
        }
        let sv = self.kernel.signal_var;
        let mut jitter = FIRST_JITTER * sv;
        while jitter <= MAX_JITTER * sv * (1.0 + 1e-9) {
            if schur + jitter > 0.0 {
                return Ok(((schur + jitter).sqrt(), jitter));
            }
            jitter *= 10.0;
        }
        Err(Error::Numerical(format!(
            "Schur complement {schur:e} at {x:?} is not positive after jitter"
        )))
    }

    /// Builds a state from scratch with a dense row-oriented Cholesky of the
    /// full Gram matrix.
    pub fn from_observations(
        kernel: KernelParams,
        prior: PriorMean,
        observations: &[(IndexPoint, f64)],
    ) -> Result<Self> {
        let mut state = Self::new(kernel, prior)?;
        let n = observations.len();
        let pts: Vec<IndexPoint> = observations.iter().map(|(p, _)| *p).collect();
        let mut l = vec![vec![0.0; n]; n];
        let mut jitter = vec![0.0; n];
        for j in 0..n {
            for i in j..n {
                let mut sum = matern_kernel(&pts[i], &pts[j], &kernel);
                if i == j {
                    sum += kernel.noise_var;
                }
                sum -= l[i][..j]
                    .iter()
                    .zip(&l[j][..j])
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
                if i == j {
                    let (pivot, extra) = state.positive_pivot(sum, &pts[j])?;
                    l[j][j] = pivot;
                    jitter[j] = extra;
                } else {
                    l[i][j] = sum / l[j][j];
                }
            }
        }
        let mut whitened: Vec<f64> = observations
            .iter()
            .map(|(p, s)| s - state.prior.at(p))
            .collect();
        for i in 0..n {
            let dot: f64 = (0..i).map(|k| l[i][k] * whitened[k]).sum();
            whitened[i] = (whitened[i] - dot) / l[i][i];
        }
        state.factor = l
            .into_iter()
            .enumerate()
            .map(|(i, mut row)| {
                row.truncate(i + 1);
                row
            })
            .collect();
        state.whitened = whitened;
        state.points = pts;
        state.observed = observations.iter().map(|(_, s)| *s).collect();
        state.jitter = jitter;
        Ok(state)
    }
}

/// Upper-confidence score `|μ(q)| + κ·σ(q)`.
pub fn acquisition(state: &GpState, q: &IndexPoint, kappa: f64) -> f64 {
    let (mean, var) = state.posterior(q);
    mean.abs() + kappa * var.max(0.0).sqrt()
}
