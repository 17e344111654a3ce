//! Classifiers with analytically known saliency.
//!
//! For a reference image `ref`, occlusion fill `f` and a region `B`, the
//! visibility of cell `λ` in an input `i` is the channel mean of
//!
//! ```text
//! v_c(λ) = clamp(1 − |i_c(λ) − ref_c(λ)| / |f − ref_c(λ)|, 0, 1)
//! ```
//!
//! (`v_c = 1` when `ref_c(λ) = f`, since such a cell cannot be occluded).
//! The visible fraction of `B` is `mean_{λ∈B} v(λ)` and
//!
//! * `region_fraction` returns `fraction(B)^γ`,
//! * `multi_region_max` returns `max_j fraction(B_j)^γ` over the connected
//!   components `B_j` of the region,
//! * `constant` returns `c`.

use crate::error::{ClassifierError, Error, Result};
use crate::volume::{Classifier, Dims, ImageVolume, Label, RegionVolume};

pub const DEFAULT_LABEL: &str = "target";

#[derive(Debug, Clone)]
enum Kind {
    RegionFraction(RegionVolume),
    MultiRegionMax(Vec<RegionVolume>),
    Constant(f64),
}

#[derive(Debug, Clone)]
pub struct SyntheticClassifier {
    kind: Kind,
    dims: Dims,
    reference: Option<ImageVolume>,
    gamma: f64,
    fill: f64,
    labels: Vec<Label>,
}

fn default_label() -> Vec<Label> {
    vec![Label::new(DEFAULT_LABEL).expect("non-empty")]
}

impl SyntheticClassifier {
    pub fn region_fraction(
        reference: ImageVolume,
        region: RegionVolume,
        gamma: f64,
        fill: f64,
    ) -> Result<Self> {
        Self::with_regions(reference, Kind::RegionFraction(region), gamma, fill)
    }

    /// Scores the best-visible connected component of `region`.
    pub fn multi_region_max(
        reference: ImageVolume,
        region: RegionVolume,
        gamma: f64,
        fill: f64,
    ) -> Result<Self> {
        let parts = region.components();
        Self::with_regions(reference, Kind::MultiRegionMax(parts), gamma, fill)
    }

    pub fn constant(dims: Dims, c: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::Config(format!(
                "constant confidence {c} is outside [0, 1]"
            )));
        }
        Ok(Self {
            kind: Kind::Constant(c),
            dims,
            reference: None,
            gamma: 1.0,
            fill: 0.0,
            labels: default_label(),
        })
    }

    fn with_regions(reference: ImageVolume, kind: Kind, gamma: f64, fill: f64) -> Result<Self> {
        let dims = reference.dims();
        let regions: &[RegionVolume] = match &kind {
            Kind::RegionFraction(r) => std::slice::from_ref(r),
            Kind::MultiRegionMax(rs) => rs,
            Kind::Constant(_) => &[],
        };
        if let Some(r) = regions.iter().find(|r| r.dims() != dims) {
            return Err(Error::Shape(format!(
                "region {} does not match reference {dims}",
                r.dims()
            )));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Config(format!(
                "saturation exponent must be > 0, got {gamma}"
            )));
        }
        Ok(Self {
            kind,
            dims,
            reference: Some(reference),
            gamma,
            fill,
            labels: default_label(),
        })
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.labels = vec![label];
        self
    }

    fn visible_fraction(
        &self,
        reference: &ImageVolume,
        region: &RegionVolume,
        image: &ImageVolume,
    ) -> f64 {
        let channels = image.channels();
        let mut total = 0.0;
        let mut count = 0usize;
        for (idx, inside) in region.cells().iter().enumerate() {
            if !inside {
                continue;
            }
            let (cur, refc) = (image.cell(idx), reference.cell(idx));
            let v: f64 = cur
                .iter()
                .zip(refc)
                .map(|(i, r)| {
                    let span = (self.fill - r).abs();
                    if span < 1e-12 {
                        1.0
                    } else {
                        (1.0 - (i - r).abs() / span).clamp(0.0, 1.0)
                    }
                })
                .sum::<f64>()
                / channels as f64;
            total += v;
            count += 1;
        }
        total / count as f64
    }

    pub fn confidence(&self, image: &ImageVolume) -> Result<f64, ClassifierError> {
        if image.dims() != self.dims {
            return Err(ClassifierError::Shape(format!(
                "classifier expects {}, got {}",
                self.dims,
                image.dims()
            )));
        }
        let score = |reference: &ImageVolume, r: &RegionVolume| {
            self.visible_fraction(reference, r, image).powf(self.gamma)
        };
        let c = match (&self.kind, &self.reference) {
            (Kind::Constant(c), _) => *c,
            (Kind::RegionFraction(r), Some(reference)) => {
                if reference.channels() != image.channels() {
                    return Err(ClassifierError::Shape(
                        "channel count differs from reference".into(),
                    ));
                }
                score(reference, r)
            }
            (Kind::MultiRegionMax(rs), Some(reference)) => {
                if reference.channels() != image.channels() {
                    return Err(ClassifierError::Shape(
                        "channel count differs from reference".into(),
                    ));
                }
                rs.iter().map(|r| score(reference, r)).fold(0.0, f64::max)
            }
            _ => unreachable!("region classifiers always carry a reference"),
        };
        Ok(c.clamp(0.0, 1.0))
    }
}

impl Classifier for SyntheticClassifier {
    fn labels(&self) -> &[Label] {
        &self.labels
    }

    fn evaluate(&self, batch: &[&ImageVolume], label: &Label) -> Result<Vec<f64>, ClassifierError> {
        if !self.labels.contains(label) {
            return Err(ClassifierError::UnknownLabel(label.to_string()));
        }
        batch.iter().map(|img| self.confidence(img)).collect()
    }
}
