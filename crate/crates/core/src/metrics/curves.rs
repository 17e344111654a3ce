use crate::error::{Error, Result};
use crate::volume::{
    checked_evaluate, Classifier, Dims, ImageVolume, Label, RegionVolume, SaliencyVolume,
};

/// A metric curve over the step schedule `1/steps, 2/steps, …, 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveResult {
    pub fractions: Vec<f64>,
    pub values: Vec<f64>,
    /// Arithmetic mean of `values`.
    pub score: f64,
}

impl CurveResult {
    fn new(fractions: Vec<f64>, values: Vec<f64>) -> Self {
        let score = values.iter().sum::<f64>() / values.len() as f64;
        Self {
            fractions,
            values,
            score,
        }
    }
}

/// Cell indices sorted by descending saliency; ties keep flat (frame-major,
/// then row-major) order.
pub fn saliency_ranking(map: &SaliencyVolume) -> Vec<usize> {
    let v = map.values();
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|a, b| v[*b].total_cmp(&v[*a]).then(a.cmp(b)));
    idx
}

/// Number of top cells selected at step `k` of `steps`: `round(k·n/steps)`.
pub fn step_count(k: usize, steps: usize, cells: usize) -> usize {
    (2 * k * cells + steps) / (2 * steps)
}

fn schedule(steps: usize, cells: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    if steps == 0 {
        return Err(Error::Config("steps must be >= 1".into()));
    }
    let fractions = (1..=steps).map(|k| k as f64 / steps as f64).collect();
    let counts = (1..=steps).map(|k| step_count(k, steps, cells)).collect();
    Ok((fractions, counts))
}

/// Membership of the top-`count` cells.
pub fn top_set(ranking: &[usize], count: usize) -> Vec<bool> {
    let mut set = vec![false; ranking.len()];
    for &i in &ranking[..count] {
        set[i] = true;
    }
    set
}

fn check_dims(image: Dims, map: Dims) -> Result<()> {
    if image != map {
        return Err(Error::Shape(format!(
            "map {map} does not match image {image}"
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn curve(
    model: &dyn Classifier,
    image: &ImageVolume,
    label: &Label,
    map: &SaliencyVolume,
    steps: usize,
    fill: f64,
    reveal: bool,
    what: &str,
) -> Result<CurveResult> {
    check_dims(image.dims(), map.dims())?;
    let ranking = saliency_ranking(map);
    let (fractions, counts) = schedule(steps, ranking.len())?;
    let canvases: Vec<ImageVolume> = counts
        .iter()
        .map(|&k| {
            let top = top_set(&ranking, k);
            image.with_cells_filled(fill, |i| top[i] == reveal)
        })
        .collect();
    let refs: Vec<&ImageVolume> = canvases.iter().collect();
    let values = checked_evaluate(model, &refs, label).map_err(|e| Error::classifier(what, e))?;
    Ok(CurveResult::new(fractions, values))
}

/// Confidence as the top-k cells are revealed on a `fill` canvas. Higher is better.
pub fn insertion(
    model: &dyn Classifier,
    image: &ImageVolume,
    label: &Label,
    map: &SaliencyVolume,
    steps: usize,
    fill: f64,
) -> Result<CurveResult> {
    curve(model, image, label, map, steps, fill, true, "insertion")
}

/// Confidence as the top-k cells are hidden with `fill`. Lower is better.
pub fn deletion(
    model: &dyn Classifier,
    image: &ImageVolume,
    label: &Label,
    map: &SaliencyVolume,
    steps: usize,
    fill: f64,
) -> Result<CurveResult> {
    curve(model, image, label, map, steps, fill, false, "deletion")
}

/// F-measure of the top-k cells against a ground-truth region at each step.
pub fn f_measure(map: &SaliencyVolume, region: &RegionVolume, steps: usize) -> Result<CurveResult> {
    check_dims(region.dims(), map.dims())?;
    let truth = region.count();
    if truth == 0 {
        return Err(Error::EmptyRegion);
    }
    let ranking = saliency_ranking(map);
    let (fractions, counts) = schedule(steps, ranking.len())?;
    let mut values = Vec::with_capacity(steps);
    let mut hits = 0usize;
    let mut taken = 0usize;
    for &k in &counts {
        while taken < k {
            hits += usize::from(region.contains(ranking[taken]));
            taken += 1;
        }
        let f = if k == 0 || hits == 0 {
            0.0
        } else {
            let precision = hits as f64 / k as f64;
            let recall = hits as f64 / truth as f64;
            2.0 * precision * recall / (precision + recall)
        };
        values.push(f);
    }
    Ok(CurveResult::new(fractions, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synthetic::SyntheticClassifier;
    use proptest::prelude::*;

    fn setup(h: usize, w: usize) -> (ImageVolume, RegionVolume, SyntheticClassifier, Label) {
        let dims = Dims::still(h, w);
        let image = ImageVolume::from_fn(dims, 3, |_, y, x, c| {
            0.25 + ((y + 2 * x + c) % 5) as f64 / 8.0
        })
        .unwrap();
        let region = RegionVolume::from_box(dims, 0..h / 2, 0..w / 2).unwrap();
        let model =
            SyntheticClassifier::region_fraction(image.clone(), region.clone(), 1.0, 0.0).unwrap();
        let label = model.labels()[0].clone();
        (image, region, model, label)
    }

    #[test]
    fn full_reveal_is_unmasked_confidence() {
        let (image, region, model, label) = setup(8, 8);
        let c = insertion(&model, &image, &label, &region.indicator(), 1, 0.0).unwrap();
        assert_eq!(c.values, vec![1.0]);
        assert_eq!(c.fractions, vec![1.0]);
    }

    #[test]
    fn insertion_of_exact_indicator() {
        // region is 64 of 256 cells; steps of 12.8 cells
        let (image, region, model, label) = setup(16, 16);
        let c = insertion(&model, &image, &label, &region.indicator(), 20, 0.0).unwrap();
        let mut expected = Vec::new();
        for k in 1..=20usize {
            let n = step_count(k, 20, 256);
            expected.push((n.min(64)) as f64 / 64.0);
        }
        assert_eq!(c.values, expected);
        assert_eq!(&c.values[4..], &[1.0; 16]);
        // 13, 26, 38, 51 cells then full region
        let ramp = (13.0 + 26.0 + 38.0 + 51.0) / 64.0;
        assert!((c.score - (ramp + 16.0) / 20.0).abs() < 1e-12);
    }

    #[test]
    fn deletion_of_exact_indicator_reaches_zero() {
        let (image, region, model, label) = setup(16, 16);
        let c = deletion(&model, &image, &label, &region.indicator(), 20, 0.0).unwrap();
        assert!(c.values[4..].iter().all(|v| *v == 0.0));
        assert!(c.values[0] > 0.0);
    }

    #[test]
    fn constant_classifier_curves() {
        let (image, region, _, label) = setup(8, 8);
        let model = SyntheticClassifier::constant(image.dims(), 0.35)
            .unwrap()
            .with_label(label.clone());
        let map = region.indicator();
        assert!(
            (insertion(&model, &image, &label, &map, 20, 0.0)
                .unwrap()
                .score
                - 0.35)
                .abs()
                < 1e-15
        );
        assert!(
            (deletion(&model, &image, &label, &map, 7, 0.0)
                .unwrap()
                .score
                - 0.35)
                .abs()
                < 1e-15
        );
    }

    #[test]
    fn shape_mismatch() {
        let (image, _, model, label) = setup(8, 8);
        let map = SaliencyVolume::zeros(Dims::still(4, 4));
        assert!(matches!(
            insertion(&model, &image, &label, &map, 5, 0.0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn f_measure_hits_one_at_region_fraction() {
        let (_, region, _, _) = setup(16, 16);
        let c = f_measure(&region.indicator(), &region, 4).unwrap();
        // 64 of 256 cells = the first quarter step
        assert_eq!(c.values[0], 1.0);
        assert!(c.values[1..].iter().all(|v| *v < 1.0));
    }

    #[test]
    fn anti_indicator_scores_zero_early() {
        let (_, region, _, _) = setup(16, 16);
        let anti = SaliencyVolume::new(
            region.dims(),
            region
                .cells()
                .iter()
                .map(|c| if *c { 0.0 } else { 1.0 })
                .collect(),
        )
        .unwrap();
        let c = f_measure(&anti, &region, 20).unwrap();
        for (f, v) in c.fractions.iter().zip(&c.values) {
            if *f < 0.75 {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn uniform_map_takes_row_major_prefix() {
        let (_, region, _, _) = setup(8, 8);
        let map = SaliencyVolume::zeros(region.dims());
        let c = f_measure(&map, &region, 8).unwrap();
        for (k, v) in c.values.iter().enumerate() {
            let n = step_count(k + 1, 8, 64);
            let hits = (0..n).filter(|i| region.contains(*i)).count() as f64;
            let p = hits / n as f64;
            let r = hits / 16.0;
            let f = if hits == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            };
            assert!((v - f).abs() < 1e-15);
        }
    }

    /// Records which cells of each evaluated canvas are visible.
    #[derive(Default)]
    struct Recorder {
        seen: std::sync::Mutex<Vec<Vec<bool>>>,
    }

    impl Classifier for Recorder {
        fn labels(&self) -> &[Label] {
            &[]
        }
        fn evaluate(
            &self,
            batch: &[&ImageVolume],
            _: &Label,
        ) -> Result<Vec<f64>, crate::error::ClassifierError> {
            let mut seen = self.seen.lock().unwrap();
            for img in batch {
                seen.push(img.data().iter().map(|v| *v != 0.0).collect());
            }
            Ok(vec![0.0; batch.len()])
        }
    }

    proptest! {
        #[test]
        fn insertion_and_deletion_are_complementary(values in prop::collection::vec(-1.0f64..1.0, 36), steps in 1usize..12) {
            let dims = Dims::still(6, 6);
            let image = ImageVolume::filled(dims, 1, 0.5).unwrap();
            let map = SaliencyVolume::new(dims, values).unwrap();
            let rec = Recorder::default();
            let label = Label::new("x").unwrap();
            insertion(&rec, &image, &label, &map, steps, 0.0).unwrap();
            deletion(&rec, &image, &label, &map, steps, 0.0).unwrap();
            let seen = rec.seen.lock().unwrap();
            prop_assert_eq!(seen.len(), 2 * steps);
            for k in 0..steps {
                let (ins, del) = (&seen[k], &seen[steps + k]);
                for i in 0..36 {
                    prop_assert!(ins[i] != del[i]);
                }
            }
        }

        #[test]
        fn f_measure_in_unit_interval(values in prop::collection::vec(-3.0f64..3.0, 25)) {
            let map = SaliencyVolume::new(Dims::still(5, 5), values).unwrap();
            let region = RegionVolume::from_box(Dims::still(5, 5), 1..3, 2..5).unwrap();
            let c = f_measure(&map, &region, 10).unwrap();
            prop_assert!((0.0..=1.0).contains(&c.score));
        }
    }
}
