//! Experiment runner: explains every dataset item with the configured
//! method, scores the maps and, for paired runs, tests the method against a
//! baseline with one-sided Wilcoxon signed-rank tests.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::dataset::dataset_load;
use crate::error::{Error, Result};
use crate::gpr::refine;
use crate::harness::config::{ClassifierSpec, Method, RunConfig, SyntheticKind};
use crate::harness::counting::CountingClassifier;
use crate::harness::external::ExternalClassifier;
use crate::harness::heatmap::emit_heatmap;
use crate::harness::synthetic::SyntheticClassifier;
use crate::mc::{estimate, McVariant};
use crate::metrics::{
    deletion, f_measure, insertion, wilcoxon_one_sided, CurveResult, WilcoxonMethod, WilcoxonResult,
};
use crate::volume::{Classifier, DatasetItem, ImageVolume, Label, RegionVolume, SaliencyVolume};

/// Scores of one item under one method.
#[derive(Debug, Clone)]
pub struct ItemResult {
    pub item: String,
    pub method: Method,
    pub map: SaliencyVolume,
    pub insertion: CurveResult,
    pub deletion: CurveResult,
    pub f_measure: Option<CurveResult>,
    /// Classifier evaluations spent producing the map, prior generation included.
    pub classifier_calls: usize,
    pub wall_ms: u128,
}

#[derive(Debug, Clone)]
pub struct PairedTest {
    pub metric: &'static str,
    pub baseline: Method,
    pub comparison: Method,
    /// `None` when every paired difference is zero.
    pub result: Option<WilcoxonResult>,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub method: Method,
    pub baseline: Option<Method>,
    pub results: Vec<ItemResult>,
    /// Baseline results, aligned with `results`.
    pub baseline_results: Vec<ItemResult>,
    pub tests: Vec<PairedTest>,
    /// `(item, error message)` for every skipped item.
    pub failures: Vec<(String, String)>,
}

/// Builds the classifier for one item. Synthetic classifiers use the item's
/// image as reference and its region as the salient set.
pub fn build_classifier(
    spec: &ClassifierSpec,
    image: &ImageVolume,
    region: Option<&RegionVolume>,
    label: &Label,
    fill: f64,
) -> Result<Box<dyn Classifier>> {
    Ok(match spec {
        ClassifierSpec::Synthetic {
            kind,
            gamma,
            constant,
        } => {
            let need_region = || {
                region.cloned().ok_or_else(|| {
                    Error::Config("synthetic region classifiers need a ground-truth region".into())
                })
            };
            let model = match kind {
                SyntheticKind::RegionFraction => SyntheticClassifier::region_fraction(
                    image.clone(),
                    need_region()?,
                    *gamma,
                    fill,
                )?,
                SyntheticKind::MultiRegionMax => SyntheticClassifier::multi_region_max(
                    image.clone(),
                    need_region()?,
                    *gamma,
                    fill,
                )?,
                SyntheticKind::Constant => SyntheticClassifier::constant(image.dims(), *constant)?,
            };
            Box::new(model.with_label(label.clone()))
        }
        ClassifierSpec::External { command, .. } => Box::new(ExternalClassifier::new(
            command.clone(),
            vec![label.clone()],
            spec.timeout(),
        )),
    })
}

/// The item's own prior, or a small Monte-Carlo estimate when it has none.
fn prior_for(
    model: &dyn Classifier,
    item: &DatasetItem,
    cfg: &RunConfig,
    seed: u64,
) -> Result<SaliencyVolume> {
    if let Some(p) = &item.prior {
        return Ok(p.clone());
    }
    let mc = cfg.mc.mc_config(
        cfg.mc.prior_variant.into(),
        cfg.mc.prior_masks,
        seed,
        cfg.fill,
    );
    estimate(model, &item.image, &item.target, &mc)
}

/// Produces the saliency map of `method` for `item`.
pub fn produce_map(
    method: Method,
    model: &dyn Classifier,
    item: &DatasetItem,
    cfg: &RunConfig,
    seed: u64,
) -> Result<SaliencyVolume> {
    match method {
        Method::Rise | Method::PnRise => {
            let variant = if method == Method::Rise {
                McVariant::Rise
            } else {
                McVariant::PnRise
            };
            let mc = cfg.mc.mc_config(variant, cfg.mc.n_masks, seed, cfg.fill);
            estimate(model, &item.image, &item.target, &mc)
        }
        Method::Prior => prior_for(model, item, cfg, seed),
        _ => {
            let refine_cfg = method
                .refine_config(&cfg.refine)
                .expect("refinement method");
            let prior = if refine_cfg.use_prior {
                Some(prior_for(model, item, cfg, seed)?)
            } else {
                None
            };
            let out = refine(
                model,
                &item.image,
                prior.as_ref(),
                &item.target,
                &refine_cfg,
                &cfg.kernel,
                cfg.fill,
            )?;
            Ok(out.map)
        }
    }
}

fn evaluate_method(
    method: Method,
    item: &DatasetItem,
    cfg: &RunConfig,
    seed: u64,
) -> Result<ItemResult> {
    let start = Instant::now();
    let model = build_classifier(
        &cfg.classifier,
        &item.image,
        item.region.as_ref(),
        &item.target,
        cfg.fill,
    )?;
    let counted = CountingClassifier::new(model);
    let map = produce_map(method, &counted, item, cfg, seed)?;
    let classifier_calls = counted.calls();
    let model = counted.into_inner();
    let ins = insertion(
        model.as_ref(),
        &item.image,
        &item.target,
        &map,
        cfg.steps,
        cfg.fill,
    )?;
    let del = deletion(
        model.as_ref(),
        &item.image,
        &item.target,
        &map,
        cfg.steps,
        cfg.fill,
    )?;
    let f = item
        .region
        .as_ref()
        .map(|r| f_measure(&map, r, cfg.steps))
        .transpose()?;
    Ok(ItemResult {
        item: item.name.clone(),
        method,
        map,
        insertion: ins,
        deletion: del,
        f_measure: f,
        classifier_calls,
        wall_ms: start.elapsed().as_millis(),
    })
}

type ItemOutcome = Result<(ItemResult, Option<ItemResult>)>;

fn evaluate_item(index: usize, item: &DatasetItem, cfg: &RunConfig) -> ItemOutcome {
    let seed = cfg.seed ^ index as u64;
    let main = evaluate_method(cfg.method, item, cfg, seed)?;
    let base = cfg
        .baseline
        .map(|b| evaluate_method(b, item, cfg, seed))
        .transpose()?;
    Ok((main, base))
}

fn paired(
    metric: &'static str,
    baseline: Method,
    comparison: Method,
    pairs: &[(f64, f64)],
) -> Result<PairedTest> {
    let result = match wilcoxon_one_sided(pairs) {
        Ok(r) => Some(r),
        Err(Error::DegenerateSample) => None,
        Err(e) => return Err(e),
    };
    Ok(PairedTest {
        metric,
        baseline,
        comparison,
        result,
    })
}

/// Scores `items` without touching the filesystem.
pub fn evaluate_items(cfg: &RunConfig, items: &[DatasetItem]) -> Result<EvalReport> {
    cfg.validate()?;
    if items.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    let outcomes: Vec<ItemOutcome> = if cfg.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| {
            items
                .par_iter()
                .enumerate()
                .map(|(k, item)| evaluate_item(k, item, cfg))
                .collect()
        })
    } else {
        items
            .iter()
            .enumerate()
            .map(|(k, item)| evaluate_item(k, item, cfg))
            .collect()
    };

    let mut results = Vec::new();
    let mut baseline_results = Vec::new();
    let mut failures = Vec::new();
    for (item, outcome) in items.iter().zip(outcomes) {
        match outcome {
            Ok((main, base)) => {
                results.push(main);
                baseline_results.extend(base);
            }
            Err(e) => failures.push((item.name.clone(), e.to_string())),
        }
    }
    if 2 * failures.len() > items.len() {
        return Err(Error::RunFailed {
            failed: failures.len(),
            total: items.len(),
        });
    }

    let mut tests = Vec::new();
    if let Some(baseline) = cfg.baseline {
        let method = cfg.method;
        let zip = || results.iter().zip(&baseline_results);
        let ins: Vec<_> = zip()
            .map(|(m, b)| (m.insertion.score, b.insertion.score))
            .collect();
        // Lower deletion is better, so the baseline takes the "greater" side.
        let del: Vec<_> = zip()
            .map(|(m, b)| (b.deletion.score, m.deletion.score))
            .collect();
        let f: Vec<_> = zip()
            .filter_map(|(m, b)| Some((m.f_measure.as_ref()?.score, b.f_measure.as_ref()?.score)))
            .collect();
        tests.push(paired("insertion", baseline, method, &ins)?);
        tests.push(paired("deletion", baseline, method, &del)?);
        if !f.is_empty() {
            tests.push(paired("f_measure", baseline, method, &f)?);
        }
    }

    Ok(EvalReport {
        method: cfg.method,
        baseline: cfg.baseline,
        results,
        baseline_results,
        tests,
        failures,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_rows(
    w: &mut csv::Writer<std::fs::File>,
    rows: &[ItemResult],
    method: Method,
    timing: bool,
) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Io(e.into());
    for r in rows {
        w.write_record([
            r.item.clone(),
            r.method.to_string(),
            r.insertion.score.to_string(),
            r.deletion.score.to_string(),
            opt(r.f_measure.as_ref().map(|c| c.score)),
            r.classifier_calls.to_string(),
            if timing {
                r.wall_ms.to_string()
            } else {
                String::new()
            },
        ])
        .map_err(csv_err)?;
    }
    if rows.is_empty() {
        return Ok(());
    }
    let wall = rows.iter().map(|r| r.wall_ms).sum::<u128>() / rows.len() as u128;
    w.write_record([
        "mean".to_string(),
        method.to_string(),
        opt(mean(rows.iter().map(|r| r.insertion.score))),
        opt(mean(rows.iter().map(|r| r.deletion.score))),
        opt(mean(
            rows.iter()
                .filter_map(|r| r.f_measure.as_ref().map(|c| c.score)),
        )),
        opt(mean(rows.iter().map(|r| r.classifier_calls as f64))),
        if timing {
            wall.to_string()
        } else {
            String::new()
        },
    ])
    .map_err(csv_err)
}

/// Writes `report.csv`, `wilcoxon.csv` (paired runs), `failures.csv` (when
/// items failed) and per-item heatmaps into `out`. Baseline heatmaps go to
/// `out/baseline`.
pub fn write_report(
    report: &EvalReport,
    items: &[DatasetItem],
    out: &Path,
    record_timing: bool,
) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let csv_err = |e: csv::Error| Error::Io(e.into());
    let header = [
        "item",
        "method",
        "insertion",
        "deletion",
        "f_measure",
        "n_classifier_calls",
        "wall_ms",
    ];

    let mut w = csv::Writer::from_path(out.join("report.csv")).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    write_rows(&mut w, &report.results, report.method, record_timing)?;
    if let Some(b) = report.baseline {
        write_rows(&mut w, &report.baseline_results, b, record_timing)?;
    }
    w.flush()?;

    if report.baseline.is_some() {
        let mut w = csv::Writer::from_path(out.join("wilcoxon.csv")).map_err(csv_err)?;
        w.write_record(["metric", "baseline", "comparison", "n", "W", "p", "method"])
            .map_err(csv_err)?;
        for t in &report.tests {
            let (n, stat, p, method) = match &t.result {
                Some(r) => (r.n_effective, r.statistic, r.p_value, r.method.as_str()),
                None => (0, 0.0, 1.0, WilcoxonMethod::Exact.as_str()),
            };
            w.write_record([
                t.metric.to_string(),
                t.baseline.to_string(),
                t.comparison.to_string(),
                n.to_string(),
                stat.to_string(),
                p.to_string(),
                method.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
    }

    if !report.failures.is_empty() {
        let mut w = csv::Writer::from_path(out.join("failures.csv")).map_err(csv_err)?;
        w.write_record(["item", "error"]).map_err(csv_err)?;
        for (item, msg) in &report.failures {
            w.write_record([item, msg]).map_err(csv_err)?;
        }
        w.flush()?;
    }

    let image_of = |name: &str| items.iter().find(|i| i.name == name).map(|i| &i.image);
    for r in &report.results {
        if let Some(img) = image_of(&r.item) {
            emit_heatmap(&r.map, img, out, &r.item)?;
        }
    }
    if !report.baseline_results.is_empty() {
        let dir = out.join("baseline");
        std::fs::create_dir_all(&dir)?;
        for r in &report.baseline_results {
            if let Some(img) = image_of(&r.item) {
                emit_heatmap(&r.map, img, &dir, &r.item)?;
            }
        }
    }
    Ok(())
}

/// Loads the dataset, evaluates it and writes all artifacts to `cfg.out`.
pub fn run_experiment(cfg: &RunConfig) -> Result<EvalReport> {
    if cfg.dataset.as_os_str().is_empty() {
        return Err(Error::Config("no dataset given".into()));
    }
    let items = dataset_load(&cfg.dataset)?;
    let report = evaluate_items(cfg, &items)?;
    write_report(&report, &items, &cfg.out, cfg.record_timing)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synth_data::{synth_items, SynthSpec};

    fn small_cfg(method: Method) -> RunConfig {
        let mut cfg = RunConfig::new(
            "",
            ClassifierSpec::Synthetic {
                kind: SyntheticKind::RegionFraction,
                gamma: 1.0,
                constant: 0.5,
            },
            method,
            11,
        );
        cfg.mc.n_masks = 50;
        cfg.mc.prior_masks = 20;
        cfg.refine.n_iters = 6;
        cfg
    }

    fn items(n: usize) -> Vec<DatasetItem> {
        synth_items(&SynthSpec {
            items: n,
            height: 16,
            width: 16,
            side: 4,
            seed: 2,
            ..SynthSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn rise_run_has_one_row_per_item_plus_summary() {
        let dir = tempfile::tempdir().unwrap();
        let items = items(5);
        let cfg = small_cfg(Method::Rise);
        let report = evaluate_items(&cfg, &items).unwrap();
        assert_eq!(report.results.len(), 5);
        assert!(report.results.iter().all(|r| r.classifier_calls == 50));
        write_report(&report, &items, dir.path(), false).unwrap();
        let text = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert_eq!(text.lines().count(), 1 + 5 + 1);
        assert!(text.lines().last().unwrap().starts_with("mean,rise,"));
        assert!(!dir.path().join("wilcoxon.csv").exists());
        assert!(dir.path().join("heatmap_item004_0.png").exists());
    }

    #[test]
    fn paired_run_has_three_tests() {
        let mut cfg = small_cfg(Method::Borex);
        cfg.baseline = Some(Method::Prior);
        let items = items(4);
        let report = evaluate_items(&cfg, &items).unwrap();
        let metrics: Vec<_> = report.tests.iter().map(|t| t.metric).collect();
        assert_eq!(metrics, ["insertion", "deletion", "f_measure"]);
        assert_eq!(report.baseline_results.len(), 4);
        // items carry priors, so the baseline spends no calls
        assert!(report
            .baseline_results
            .iter()
            .all(|r| r.classifier_calls == 0));
        assert!(report.results.iter().all(|r| r.classifier_calls == 12));
    }

    #[test]
    fn missing_prior_is_generated() {
        let mut items = items(2);
        for it in &mut items {
            it.prior = None;
        }
        let cfg = small_cfg(Method::Borex);
        let report = evaluate_items(&cfg, &items).unwrap();
        assert!(report.results.iter().all(|r| r.classifier_calls == 20 + 12));
    }

    #[test]
    fn failures_are_skipped_until_majority() {
        let mut items = items(3);
        items[1].region = None;
        let cfg = small_cfg(Method::Rise);
        let report = evaluate_items(&cfg, &items).unwrap();
        assert_eq!(report.results.len(), 2);
        assert_eq!(report.failures.len(), 1);
        items[2].region = None;
        assert!(matches!(
            evaluate_items(&cfg, &items),
            Err(Error::RunFailed {
                failed: 2,
                total: 3
            })
        ));
    }

    #[test]
    fn parallel_matches_serial() {
        let items = items(4);
        let mut cfg = small_cfg(Method::PnRise);
        let serial = evaluate_items(&cfg, &items).unwrap();
        cfg.workers = 3;
        let parallel = evaluate_items(&cfg, &items).unwrap();
        for (a, b) in serial.results.iter().zip(&parallel.results) {
            assert_eq!(a.map.values(), b.map.values());
            assert_eq!(a.insertion, b.insertion);
        }
    }
}
