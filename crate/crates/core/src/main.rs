use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use borex::dataset::{dataset_save, read_image, read_region, read_saliency, write_saliency};
use borex::harness::config::{ClassifierSpec, Method, RunConfig, SyntheticKind};
use borex::harness::experiment::{build_classifier, produce_map, run_experiment};
use borex::harness::heatmap::emit_heatmap;
use borex::harness::synth_data::{synth_items, SynthSpec};
use borex::metrics::{deletion, f_measure, insertion};
use borex::{DatasetItem, Label, Result};

#[derive(Parser)]
#[command(
    name = "borex",
    version,
    about = "Black-box saliency maps with Gaussian-process refinement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Explain and score every item of a dataset.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        method: Option<Method>,
    },
    /// Produce one saliency map.
    Explain {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        label: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        prior: Option<PathBuf>,
        /// Ground-truth region, required by the synthetic region classifiers.
        #[arg(long)]
        region: Option<PathBuf>,
        #[arg(long)]
        method: Option<Method>,
        /// Output tensor; `heatmap_<stem>_<frame>.png` files are written beside it.
        #[arg(long, default_value = "map.bxt")]
        out: PathBuf,
    },
    /// Score an existing map.
    Eval {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        label: String,
        #[arg(long)]
        region: PathBuf,
        /// Classifier and metric settings; defaults to the region_fraction classifier.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write a seeded synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        items: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 8)]
        side: usize,
        #[arg(long, default_value_t = 1)]
        regions: usize,
        /// Prior signal-to-noise ratio; 0 writes items without priors.
        #[arg(long, default_value_t = 1.0)]
        snr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            method,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(out) = out {
                cfg.out = out;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(m) = method {
                cfg.method = m;
            }
            let report = run_experiment(&cfg)?;
            for (item, msg) in &report.failures {
                eprintln!("warning: item {item} skipped: {msg}");
            }
            for t in &report.tests {
                if let Some(r) = &t.result {
                    println!(
                        "{}: {} vs {}: W={} p={} ({})",
                        t.metric,
                        t.comparison,
                        t.baseline,
                        r.statistic,
                        r.p_value,
                        r.method.as_str()
                    );
                }
            }
            println!(
                "wrote {} items to {}",
                report.results.len(),
                cfg.out.display()
            );
        }
        Command::Explain {
            image,
            label,
            config,
            prior,
            region,
            method,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let image = read_image(&image)?;
            let target = Label::new(label)?;
            let prior = prior.map(|p| read_saliency(&p)).transpose()?;
            let region = region.map(|r| read_region(&r)).transpose()?;
            let item = DatasetItem::new("explain", image, target, region, prior)?;
            let model = build_classifier(
                &cfg.classifier,
                &item.image,
                item.region.as_ref(),
                &item.target,
                cfg.fill,
            )?;
            let map = produce_map(
                method.unwrap_or(cfg.method),
                model.as_ref(),
                &item,
                &cfg,
                cfg.seed,
            )?;
            let dir = out
                .parent()
                .filter(|p| !p.as_os_str().is_empty())
                .unwrap_or(std::path::Path::new("."));
            std::fs::create_dir_all(dir)?;
            write_saliency(&out, &map)?;
            let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("map");
            emit_heatmap(&map, &item.image, dir, stem)?;
        }
        Command::Eval {
            map,
            image,
            label,
            region,
            config,
        } => {
            let map = read_saliency(&map)?;
            let image = read_image(&image)?;
            let region = read_region(&region)?;
            let target = Label::new(label)?;
            let cfg = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::new(
                    "",
                    ClassifierSpec::Synthetic {
                        kind: SyntheticKind::RegionFraction,
                        gamma: 1.0,
                        constant: 0.5,
                    },
                    Method::Prior,
                    0,
                ),
            };
            let model =
                build_classifier(&cfg.classifier, &image, Some(&region), &target, cfg.fill)?;
            let ins = insertion(model.as_ref(), &image, &target, &map, cfg.steps, cfg.fill)?;
            let del = deletion(model.as_ref(), &image, &target, &map, cfg.steps, cfg.fill)?;
            let f = f_measure(&map, &region, cfg.steps)?;
            println!("insertion,deletion,f_measure");
            println!("{},{},{}", ins.score, del.score, f.score);
        }
        Command::Synth {
            out,
            items,
            size,
            side,
            regions,
            snr,
            seed,
        } => {
            let spec = SynthSpec {
                items,
                height: size,
                width: size,
                side,
                regions,
                prior_snr: (snr > 0.0).then_some(snr),
                seed,
                ..SynthSpec::default()
            };
            let manifest = dataset_save(&out, &synth_items(&spec)?)?;
            println!("{}", manifest.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
