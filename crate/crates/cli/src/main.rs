use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;
use tallyscene::catalog::SplitLabel;
use tallyscene::config::{load_config, GeneratorConfig};
use tallyscene::eval::{count_error_metrics, ground_truth_counts, load_predictions, MetricsReport};
use tallyscene::pipeline::{generate_dataset, regenerate_scene, scene_dir, summarize};

/// Overrides `output_dir` from the config file.
const OUTPUT_ENV: &str = "TALLYSCENE_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "tallyscene", version, about = "Synthetic counting dataset generator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset, resuming any completed scenes in the output directory.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Number of scenes, overriding the config.
        #[arg(long)]
        scenes: Option<u64>,
        /// Worker threads; 0 uses every core.
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory, overriding the config and the environment.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Regenerate a single scene of a run.
    Regen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        index: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Rewrite summary.json and preview.png for a dataset directory.
    Summarize { dir: PathBuf },
    /// Print the default configuration.
    PrintConfig,
    /// Score count predictions against a COCO ground truth file.
    Evaluate {
        #[arg(long)]
        gt: PathBuf,
        /// JSON lines of {"image_id", "class_id", "count"}.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        include_distractors: bool,
        /// Restrict to one split: train, val or test.
        #[arg(long)]
        split: Option<String>,
        /// Where to write the JSON report. Defaults to <pred>.report.json.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn config_with_overrides(path: &Path, output: Option<PathBuf>) -> Result<GeneratorConfig> {
    let mut config = load_config(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(dir) = output.or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from)) {
        config.output_dir = dir;
    }
    Ok(config)
}

fn generate(config: &Path, scenes: Option<u64>, workers: Option<usize>, output: Option<PathBuf>) -> Result<bool> {
    let mut config = config_with_overrides(config, output)?;
    if let Some(n) = scenes {
        config.scene_count = n;
    }
    if let Some(w) = workers {
        config.workers = w;
    }
    let report = generate_dataset(&config)?;
    println!(
        "{} scenes in {}: {} generated, {} resumed, {} discarded, {} failed",
        report.manifest.scene_count,
        config.output_dir.display(),
        report.generated,
        report.resumed,
        report.discarded,
        report.failed
    );
    for e in report.manifest.entries.iter().filter(|e| e.error.is_some()) {
        eprintln!("scene {}: {}", e.scene_index, e.error.as_deref().unwrap_or_default());
    }
    Ok(report.failed == 0)
}

fn regen(config: &Path, index: u64, output: Option<PathBuf>) -> Result<()> {
    let config = config_with_overrides(config, output)?;
    let record = regenerate_scene(&config, index)?;
    println!(
        "scene {index}: {:?} after {} failed attempts, written to {}",
        record.status,
        record.diagnostics.failed_attempts.len(),
        scene_dir(&config.output_dir, index).display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvaluationReport {
    ground_truth: PathBuf,
    predictions: PathBuf,
    include_distractors: bool,
    split: Option<SplitLabel>,
    metrics: MetricsReport,
    warnings: Vec<String>,
}

fn evaluate(
    gt: PathBuf,
    pred: PathBuf,
    include_distractors: bool,
    split: Option<String>,
    report: Option<PathBuf>,
) -> Result<()> {
    let split = match split.as_deref() {
        None => None,
        Some(s) => match SplitLabel::parse(s) {
            Some(l) => Some(l),
            None => bail!("unknown split {s:?}; expected train, val or test"),
        },
    };
    let doc = tallyscene::annotate::load_coco(&gt)?;
    let truth = ground_truth_counts(&doc, include_distractors, split);
    let loaded = load_predictions(&pred, &truth)?;
    for w in &loaded.warnings {
        log::warn!("{w}");
    }
    let metrics = count_error_metrics(&loaded.pairs)?;
    println!("{metrics} over {} pairs", metrics.n);
    let path = report.unwrap_or_else(|| {
        let mut p = pred.clone().into_os_string();
        p.push(".report.json");
        PathBuf::from(p)
    });
    let out = EvaluationReport {
        ground_truth: gt,
        predictions: pred,
        include_distractors,
        split,
        metrics,
        warnings: loaded.warnings,
    };
    std::fs::write(&path, serde_json::to_string_pretty(&out)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    println!("report written to {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate {
            config,
            scenes,
            workers,
            output,
        } => generate(&config, scenes, workers, output),
        Command::Regen { config, index, output } => regen(&config, index, output).map(|_| true),
        Command::Summarize { dir } => {
            let s = summarize(&dir)?;
            println!(
                "{} scenes: {} ok, {} discarded, {} failed; {} objects, mean {:.2} per ok scene",
                s.stats.scenes,
                s.stats.ok,
                s.stats.discarded,
                s.failed,
                s.stats.objects,
                s.stats.mean_objects_per_scene
            );
            Ok(true)
        }
        Command::PrintConfig => {
            print!("{}", GeneratorConfig::default().to_text());
            Ok(true)
        }
        Command::Evaluate {
            gt,
            pred,
            include_distractors,
            split,
            report,
        } => evaluate(gt, pred, include_distractors, split, report).map(|_| true),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
