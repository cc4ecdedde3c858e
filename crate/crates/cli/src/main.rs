//! Command-line driver for the augmentation pipeline.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use causaug::pipeline::{cross_validate, CvReport, sweep, write_sweep, Pipeline, PipelineConfig, Stage, StageStatus};
use causaug::synth::{synthesize, synthetic_pipeline_config, write_bundle, SynthConfig};

#[derive(Parser)]
#[command(name = "causaug", version, about = "Knowledge-guided dual-learning data augmentation for event causality identification")]
struct Cli {
    /// Pipeline configuration file (TOML, or JSON by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Writes per-example dual-training rewards to dual-train/rewards.jsonl.
    #[arg(long, global = true)]
    dump_rewards: bool,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split the corpus into train, dev and test sets.
    Ingest,
    /// Collect annotated, lexically expanded and connective event pairs.
    ExtractPairs,
    /// Train the causal embedding space.
    TrainCausalSpace,
    /// Rank candidate pairs by causal distance and keep both extremes.
    SelectPairs,
    /// Pre-train the identifier and both generators.
    Pretrain,
    /// Dual reinforcement training of generators and identifier.
    DualTrain,
    /// Generate sentences for the selected pairs.
    Generate,
    /// Score generated sentences and keep the best.
    Filter,
    /// Assemble the augmented corpus at the configured ratio.
    Augment,
    /// Further-train the identifier on labeled plus augmented data.
    TrainFinal,
    /// Evaluate the pre-trained and final identifiers on the test set.
    Evaluate,
    /// Run every stage, skipping those already up to date.
    RunAll,
    /// Cross-validate over all folds and replicate seeds.
    CrossValidate,
    /// Cross-validate once per value of one parameter.
    Sweep {
        /// One of ratio, alpha, beta, mu, lambda, gamma, rounds.
        param: String,
        /// Values, e.g. `1:1 1:2` or `0.3,0.4`.
        #[arg(required = false, value_delimiter = ',')]
        values: Vec<String>,
    },
    /// Write the synthetic template corpus bundle and a matching config.
    Synth {
        /// Bundle directory (defaults to --out, then `data/synthetic`).
        #[arg(long)]
        dir: Option<PathBuf>,
        #[arg(long, default_value_t = SynthConfig::default().sentences_per_topic)]
        sentences_per_topic: usize,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let Some(path) = &cli.config else {
        bail!("this command needs --config <path>");
    };
    let mut cfg = PipelineConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if cli.dump_rewards {
        cfg.dump_rewards = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn stage_of(c: &Command) -> Option<Stage> {
    Some(match c {
        Command::Ingest => Stage::Ingest,
        Command::ExtractPairs => Stage::ExtractPairs,
        Command::TrainCausalSpace => Stage::TrainCausalSpace,
        Command::SelectPairs => Stage::SelectPairs,
        Command::Pretrain => Stage::Pretrain,
        Command::DualTrain => Stage::DualTrain,
        Command::Generate => Stage::Generate,
        Command::Filter => Stage::Filter,
        Command::Augment => Stage::Augment,
        Command::TrainFinal => Stage::TrainFinal,
        Command::Evaluate => Stage::Evaluate,
        _ => return None,
    })
}

fn report_status(stage: Stage, status: StageStatus) {
    let s = match status {
        StageStatus::Ran => "done",
        StageStatus::Skipped => "up to date",
    };
    println!("{stage:<20} {s}");
}

fn write_json(path: &Path, value: &CvReport) -> Result<()> {
    std::fs::create_dir_all(path.parent().unwrap_or(Path::new(".")))?;
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(stage) = stage_of(&cli.command) {
        let p = Pipeline::new(load_config(&cli)?)?;
        report_status(stage, p.run(stage)?);
        return Ok(());
    }
    match &cli.command {
        Command::RunAll => {
            let p = Pipeline::new(load_config(&cli)?)?;
            for (stage, status) in p.run_all()? {
                report_status(stage, status);
            }
            let r = p.report()?;
            println!(
                "baseline F1 {:.4}  final F1 {:.4}  (P {:.4}, R {:.4})  BLEU {:.4}",
                r.baseline.f1, r.final_.f1, r.final_.precision, r.final_.recall, r.bleu_diversity
            );
            println!("metrics: {}", p.path(causaug::pipeline::METRICS).display());
        }
        Command::CrossValidate => {
            let cfg = load_config(&cli)?;
            let cv = cross_validate(&cfg)?;
            let path = cfg.out_dir.join("cv_metrics.json");
            write_json(&path, &cv)?;
            println!(
                "{} runs  baseline F1 {:.4}  final F1 {:.4}  (P {:.4}, R {:.4})",
                cv.runs.len(),
                cv.baseline.f1,
                cv.final_.f1,
                cv.final_.precision,
                cv.final_.recall
            );
            println!("report: {}", path.display());
        }
        Command::Sweep { param, values } => {
            let cfg = load_config(&cli)?;
            let report = sweep(param, values, &cfg)?;
            write_sweep(&cfg.out_dir, &report)?;
            println!("{:<8} {:>9} {:>9} {:>9} {:>12}", param, "P", "R", "F1", "baseline F1");
            for r in &report.rows {
                println!("{:<8} {:>9.4} {:>9.4} {:>9.4} {:>12.4}", r.value, r.precision, r.recall, r.f1, r.baseline_f1);
            }
            println!("table: {}", cfg.out_dir.join("sweep.csv").display());
        }
        Command::Synth { dir, sentences_per_topic } => {
            let dir = dir.clone().or_else(|| cli.out.clone()).unwrap_or_else(|| PathBuf::from("data/synthetic"));
            let scfg = SynthConfig {
                seed: cli.seed.unwrap_or(SynthConfig::default().seed),
                sentences_per_topic: *sentences_per_topic,
                ..Default::default()
            };
            let bundle = synthesize(&scfg)?;
            write_bundle(&dir, &bundle, &synthetic_pipeline_config())?;
            println!(
                "wrote {} sentences and {} documents to {}",
                bundle.corpus.len(),
                bundle.documents.len(),
                dir.display()
            );
        }
        _ => unreachable!("stage commands handled above"),
    }
    Ok(())
}
