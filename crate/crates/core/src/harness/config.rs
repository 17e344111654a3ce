use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpr::{KernelParams, RefineConfig};
use crate::masking::MaskDistribution;
use crate::mc::{McConfig, McVariant};

/// Saliency-map generators the runner knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Rise,
    PnRise,
    /// Zero prior, plain occlusion drop, simple average.
    BoBaseline,
    Borex,
    NoFlip,
    SimpleAvg,
    NoPrior,
    /// The input prior map itself, unrefined.
    Prior,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Rise => "rise",
            Method::PnRise => "pn_rise",
            Method::BoBaseline => "bo_baseline",
            Method::Borex => "borex",
            Method::NoFlip => "ablation:no_flip",
            Method::SimpleAvg => "ablation:simple_avg",
            Method::NoPrior => "ablation:no_prior",
            Method::Prior => "prior",
        }
    }

    /// Whether the method consumes a prior map.
    pub fn needs_prior(&self) -> bool {
        matches!(
            self,
            Method::Borex | Method::NoFlip | Method::SimpleAvg | Method::Prior
        )
    }

    /// Refinement flags for GP-based methods.
    pub fn refine_config(&self, base: &RefineConfig) -> Option<RefineConfig> {
        let (use_flip, weighted_avg, use_prior) = match self {
            Method::BoBaseline => (false, false, false),
            Method::Borex => (true, true, true),
            Method::NoFlip => (false, true, true),
            Method::SimpleAvg => (true, false, true),
            Method::NoPrior => (true, true, false),
            Method::Rise | Method::PnRise | Method::Prior => return None,
        };
        Some(RefineConfig {
            use_flip,
            weighted_avg,
            use_prior,
            ..base.clone()
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "rise" => Method::Rise,
            "pn_rise" => Method::PnRise,
            "bo_baseline" => Method::BoBaseline,
            "borex" => Method::Borex,
            "ablation:no_flip" | "no_flip" => Method::NoFlip,
            "ablation:simple_avg" | "simple_avg" => Method::SimpleAvg,
            "ablation:no_prior" | "no_prior" => Method::NoPrior,
            "prior" => Method::Prior,
            other => return Err(Error::Config(format!("unknown method `{other}`"))),
        })
    }
}

impl TryFrom<String> for Method {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> Self {
        m.as_str().to_string()
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    RegionFraction,
    MultiRegionMax,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassifierSpec {
    /// Built per item from the item's image (as reference) and region.
    Synthetic {
        kind: SyntheticKind,
        #[serde(default = "one")]
        gamma: f64,
        #[serde(default = "half")]
        constant: f64,
    },
    External {
        command: Vec<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
    },
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn default_timeout() -> f64 {
    60.0
}

impl ClassifierSpec {
    pub fn timeout(&self) -> Duration {
        match self {
            ClassifierSpec::External { timeout_secs, .. } => {
                Duration::from_secs_f64(timeout_secs.max(0.0))
            }
            ClassifierSpec::Synthetic { .. } => Duration::ZERO,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McVariantName {
    Rise,
    PnRise,
}

impl From<McVariantName> for McVariant {
    fn from(v: McVariantName) -> Self {
        match v {
            McVariantName::Rise => McVariant::Rise,
            McVariantName::PnRise => McVariant::PnRise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub n_masks: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub keep_prob: f64,
    pub batch: usize,
    /// Masks used when a prior has to be generated for an item without one.
    pub prior_masks: usize,
    pub prior_variant: McVariantName,
}

impl Default for McSection {
    fn default() -> Self {
        let dist = MaskDistribution::default();
        Self {
            n_masks: 4000,
            grid_rows: dist.grid_rows,
            grid_cols: dist.grid_cols,
            keep_prob: dist.keep_prob,
            batch: 64,
            prior_masks: 100,
            prior_variant: McVariantName::Rise,
        }
    }
}

impl McSection {
    pub fn mc_config(&self, variant: McVariant, n_masks: usize, seed: u64, fill: f64) -> McConfig {
        McConfig {
            n_masks,
            dist: MaskDistribution {
                grid_rows: self.grid_rows,
                grid_cols: self.grid_cols,
                keep_prob: self.keep_prob,
            },
            variant,
            batch: self.batch,
            seed,
            fill,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Manifest file or directory containing `manifest.json`. Only `run` needs it.
    #[serde(default)]
    pub dataset: PathBuf,
    pub classifier: ClassifierSpec,
    pub method: Method,
    /// When set, the run is paired: every item is also explained with this
    /// method and one-sided Wilcoxon tests compare the two per metric.
    #[serde(default)]
    pub baseline: Option<Method>,
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub fill: f64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Writes wall-clock times into `report.csv`; breaks byte-for-byte reproducibility.
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default)]
    pub refine: RefineConfig,
    #[serde(default)]
    pub kernel: KernelParams,
    #[serde(default)]
    pub mc: McSection,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_steps() -> usize {
    20
}
fn default_workers() -> usize {
    1
}

impl RunConfig {
    pub fn new(
        dataset: impl Into<PathBuf>,
        classifier: ClassifierSpec,
        method: Method,
        seed: u64,
    ) -> Self {
        Self {
            dataset: dataset.into(),
            classifier,
            method,
            baseline: None,
            seed,
            out: default_out(),
            steps: default_steps(),
            fill: 0.0,
            workers: 1,
            record_timing: false,
            refine: RefineConfig::default(),
            kernel: KernelParams::default(),
            mc: McSection::default(),
        }
    }

    /// Parses TOML, or JSON when the extension is `.json`. A relative
    /// `dataset` path resolves against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        if cfg.dataset.is_relative() && !cfg.dataset.as_os_str().is_empty() {
            if let Some(dir) = path.parent() {
                cfg.dataset = dir.join(&cfg.dataset);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.refine.validate()?;
        self.kernel.validate()?;
        if self.steps == 0 {
            return Err(Error::Config("steps must be >= 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        if self.mc.n_masks == 0 || self.mc.prior_masks == 0 || self.mc.batch == 0 {
            return Err(Error::Config("mask counts and batch must be >= 1".into()));
        }
        MaskDistribution::new(self.mc.grid_rows, self.mc.grid_cols, self.mc.keep_prob)?;
        if let ClassifierSpec::External { command, .. } = &self.classifier {
            if command.is_empty() {
                return Err(Error::Config("external classifier command is empty".into()));
            }
        }
        if !self.fill.is_finite() {
            return Err(Error::Config("fill must be finite".into()));
        }
        Ok(())
    }
}
