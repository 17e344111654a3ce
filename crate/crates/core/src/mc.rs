//! Monte-Carlo saliency estimation over random occlusion masks (RISE and
//! its positive-minus-negative refinement, PN-RISE).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::masking::{apply, sample_rise_mask, Mask, MaskDistribution};
use crate::volume::{checked_evaluate, Classifier, ImageVolume, Label, SaliencyVolume};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McVariant {
    /// `S(λ) ≈ (1/N) Σ m_n(λ)/p · M(i ⊙ m_n, l)`
    Rise,
    /// `S(λ) ≈ (1/N) Σ (m_n(λ) − p)/(p(1 − p)) · M(i ⊙ m_n, l)`
    PnRise,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n_masks: usize,
    pub dist: MaskDistribution,
    pub variant: McVariant,
    pub batch: usize,
    pub seed: u64,
    pub fill: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_masks: 4000,
            dist: MaskDistribution::default(),
            variant: McVariant::Rise,
            batch: 32,
            seed: 0,
            fill: 0.0,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        self.dist.validate()?;
        if self.n_masks == 0 || self.batch == 0 {
            return Err(Error::Config("n_masks and batch must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-mask weight applied to a cell's classifier score.
fn weight(variant: McVariant, kept: f64, p: f64) -> f64 {
    match variant {
        McVariant::Rise => kept / p,
        McVariant::PnRise => (kept - p) / (p * (1.0 - p)),
    }
}

/// Runs the estimator over an explicit mask set. `keep_prob` is the design
/// marginal `p` used in the weights.
#[allow(clippy::too_many_arguments)]
pub fn estimate_with_masks(
    model: &dyn Classifier,
    image: &ImageVolume,
    label: &Label,
    masks: &[Mask],
    keep_prob: f64,
    variant: McVariant,
    fill: f64,
    batch: usize,
) -> Result<SaliencyVolume> {
    if masks.is_empty() {
        return Err(Error::Config("mask set is empty".into()));
    }
    let dims = image.dims();
    let mut acc = vec![0.0; dims.cells()];
    for (chunk_no, chunk) in masks.chunks(batch.max(1)).enumerate() {
        let masked = chunk
            .iter()
            .map(|m| apply(image, m, fill))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&ImageVolume> = masked.iter().collect();
        let scores = checked_evaluate(model, &refs, label)
            .map_err(|e| Error::classifier(format!("mask {}", chunk_no * batch.max(1)), e))?;
        for (mask, score) in chunk.iter().zip(scores) {
            for (cell, a) in acc.iter_mut().enumerate() {
                *a += weight(variant, mask.value(cell), keep_prob) * score;
            }
        }
    }
    let n = masks.len() as f64;
    SaliencyVolume::new(dims, acc.into_iter().map(|a| a / n).collect())
}

fn sample_masks(cfg: &McConfig, image: &ImageVolume) -> Vec<Mask> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.n_masks)
        .map(|_| sample_rise_mask(&cfg.dist, image.dims(), &mut rng))
        .collect()
}

pub fn estimate_rise(
    model: &dyn Classifier,
    image: &ImageVolume,
    label: &Label,
    cfg: &McConfig,
) -> Result<SaliencyVolume> {
    cfg.validate()?;
    let masks = sample_masks(cfg, image);
    estimate_with_masks(
        model,
        image,
        label,
        &masks,
        cfg.dist.keep_prob,
        McVariant::Rise,
        cfg.fill,
        cfg.batch,
    )
}

pub fn estimate_pn_rise(
    model: &dyn Classifier,
    image: &ImageVolume,
    label: &Label,
    cfg: &McConfig,
) -> Result<SaliencyVolume> {
    cfg.validate()?;
    let masks = sample_masks(cfg, image);
    estimate_with_masks(
        model,
        image,
        label,
        &masks,
        cfg.dist.keep_prob,
        McVariant::PnRise,
        cfg.fill,
        cfg.batch,
    )
}

/// Dispatches on `cfg.variant`.
pub fn estimate(
    model: &dyn Classifier,
    image: &ImageVolume,
    label: &Label,
    cfg: &McConfig,
) -> Result<SaliencyVolume> {
    match cfg.variant {
        McVariant::Rise => estimate_rise(model, image, label, cfg),
        McVariant::PnRise => estimate_pn_rise(model, image, label, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ClassifierError;
    use crate::masking::exhaustive_cell_masks;
    use crate::volume::Dims;

    struct Constant(f64, Vec<Label>);

    impl Classifier for Constant {
        fn labels(&self) -> &[Label] {
            &self.1
        }
        fn evaluate(&self, batch: &[&ImageVolume], _: &Label) -> Result<Vec<f64>, ClassifierError> {
            Ok(vec![self.0; batch.len()])
        }
    }

    struct Failing;

    impl Classifier for Failing {
        fn labels(&self) -> &[Label] {
            &[]
        }
        fn evaluate(&self, _: &[&ImageVolume], _: &Label) -> Result<Vec<f64>, ClassifierError> {
            Err(ClassifierError::Other("boom".into()))
        }
    }

    fn setup() -> (ImageVolume, Label) {
        let img = ImageVolume::filled(Dims::still(4, 4), 1, 0.7).unwrap();
        (img, Label::new("x").unwrap())
    }

    #[test]
    fn constant_classifier_exhaustive_rise_is_constant() {
        let (img, l) = setup();
        let masks = exhaustive_cell_masks(2, 2, img.dims()).unwrap();
        let m = Constant(0.3, vec![l.clone()]);
        let s = estimate_with_masks(&m, &img, &l, &masks, 0.5, McVariant::Rise, 0.0, 4).unwrap();
        assert!(s.values().iter().all(|v| (v - 0.3).abs() < 1e-15));
        let pn = estimate_with_masks(&m, &img, &l, &masks, 0.5, McVariant::PnRise, 0.0, 4).unwrap();
        assert!(pn.values().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn single_full_mask_gives_score_over_p() {
        let (img, l) = setup();
        let m = Constant(0.8, vec![l.clone()]);
        let masks = [Mask::ones(img.dims())];
        let s = estimate_with_masks(&m, &img, &l, &masks, 0.25, McVariant::Rise, 0.0, 1).unwrap();
        assert!(s.values().iter().all(|v| (v - 3.2).abs() < 1e-12));
    }

    #[test]
    fn pn_weights_at_half() {
        assert_eq!(weight(McVariant::PnRise, 1.0, 0.5), 2.0);
        assert_eq!(weight(McVariant::PnRise, 0.0, 0.5), -2.0);
    }

    #[test]
    fn classifier_failure_names_mask() {
        let (img, l) = setup();
        let cfg = McConfig {
            n_masks: 3,
            batch: 1,
            ..McConfig::default()
        };
        match estimate_rise(&Failing, &img, &l, &cfg) {
            Err(Error::Classifier { context, .. }) => assert_eq!(context, "mask 0"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mask_order_does_not_matter() {
        let (img, _) = setup();
        let model = crate::harness::synthetic::SyntheticClassifier::region_fraction(
            img.clone(),
            crate::volume::RegionVolume::from_box(img.dims(), 0..2, 1..3).unwrap(),
            1.0,
            0.0,
        )
        .unwrap();
        let label = model.labels()[0].clone();
        let mut masks = exhaustive_cell_masks(2, 2, img.dims()).unwrap();
        let a = estimate_with_masks(&model, &img, &label, &masks, 0.5, McVariant::PnRise, 0.0, 3)
            .unwrap();
        masks.reverse();
        let b = estimate_with_masks(&model, &img, &label, &masks, 0.5, McVariant::PnRise, 0.0, 5)
            .unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
