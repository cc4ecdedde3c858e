//! Cross-validation over folds and seeds, and one-parameter sweeps.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{MetricsReport, RunMetrics};
use crate::pipeline::config::PipelineConfig;
use crate::pipeline::report::{line_chart, write_csv, Series};
use crate::pipeline::stages::{Pipeline, RunReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub config_hash: String,
    pub baseline: MetricsReport,
    #[serde(rename = "final")]
    pub final_: MetricsReport,
    pub runs: Vec<RunReport>,
}

/// Runs the whole pipeline once. Stages already up to date are skipped.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport> {
    let p = Pipeline::new(cfg.clone())?;
    p.run_all()?;
    p.report()
}

/// Every fold as test fold, for seeds `seed .. seed + replicates`, each run
/// in its own directory under `out_dir/cv`. Scores are macro-averaged over
/// runs.
pub fn cross_validate(cfg: &PipelineConfig) -> Result<CvReport> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.replicates)
        .flat_map(|r| (0..cfg.k).map(move |f| (r, f)))
        .collect();
    let runs: Vec<RunReport> = jobs
        .par_iter()
        .map(|&(r, f)| {
            let seed = cfg.seed.wrapping_add(r as u64);
            let run = PipelineConfig {
                seed,
                test_fold: f,
                out_dir: cfg.out_dir.join("cv").join(format!("seed-{seed}")).join(format!("fold-{f}")),
                ..cfg.clone()
            };
            run_pipeline(&run)
        })
        .collect::<Result<_>>()?;
    let collect = |pick: fn(&RunReport) -> &MetricsReport| {
        MetricsReport::aggregate(
            jobs.iter()
                .zip(&runs)
                .map(|(&(r, f), run)| {
                    let m = pick(run);
                    RunMetrics {
                        fold: f,
                        replicate: r,
                        seed: run.seed,
                        precision: m.precision,
                        recall: m.recall,
                        f1: m.f1,
                    }
                })
                .collect(),
        )
    };
    Ok(CvReport {
        config_hash: cfg.hash(),
        baseline: collect(|r| &r.baseline),
        final_: collect(|r| &r.final_),
        runs,
    })
}

pub const SWEEP_PARAMS: [&str; 7] = ["ratio", "alpha", "beta", "mu", "lambda", "gamma", "rounds"];

/// `cfg` with `param` set to `value`.
pub fn with_param(cfg: &PipelineConfig, param: &str, value: &str) -> Result<PipelineConfig> {
    let mut c = cfg.clone();
    let real = || {
        value
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("{param} value `{value}` is not a number")))
    };
    match param {
        "ratio" => c.ratio = value.parse()?,
        "alpha" => c.alpha = real()?,
        "beta" => c.beta = real()?,
        "mu" => c.mu = real()?,
        "lambda" => c.lambda_mix = real()?,
        "gamma" => c.gamma_mix = real()?,
        "rounds" => {
            c.max_rounds = value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("rounds value `{value}` is not a count")))?
        }
        _ => {
            return Err(Error::Config(format!(
                "unknown sweep parameter `{param}`; expected one of {}",
                SWEEP_PARAMS.join(", ")
            )))
        }
    }
    c.validate()?;
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub value: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub baseline_f1: f64,
    pub runs: usize,
}

pub const SWEEP_HEADER: [&str; 7] = ["param", "value", "precision", "recall", "f1", "baseline_f1", "runs"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub param: String,
    pub rows: Vec<SweepRow>,
}

/// Cross-validates once per value, each under `out_dir/sweep/<param>-<value>`.
pub fn sweep(param: &str, values: &[String], cfg: &PipelineConfig) -> Result<SweepReport> {
    if !SWEEP_PARAMS.contains(&param) {
        return Err(Error::Config(format!(
            "unknown sweep parameter `{param}`; expected one of {}",
            SWEEP_PARAMS.join(", ")
        )));
    }
    let configs: Vec<PipelineConfig> = values
        .iter()
        .map(|v| {
            let mut c = with_param(cfg, param, v)?;
            let tag = format!("{param}-{}", v.trim().replace([':', '/', ' '], "-"));
            c.out_dir = cfg.out_dir.join("sweep").join(tag);
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let rows = values
        .iter()
        .zip(&configs)
        .map(|(v, c)| {
            let cv = cross_validate(c)?;
            Ok(SweepRow {
                param: param.to_string(),
                value: v.trim().to_string(),
                precision: cv.final_.precision,
                recall: cv.final_.recall,
                f1: cv.final_.f1,
                baseline_f1: cv.baseline.f1,
                runs: cv.runs.len(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(SweepReport {
        param: param.to_string(),
        rows,
    })
}

/// Writes `sweep.csv` and `sweep.svg` into `dir`.
pub fn write_sweep(dir: &Path, report: &SweepReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv(&dir.join("sweep.csv"), &report.rows, &SWEEP_HEADER)?;
    let labels: Vec<String> = report.rows.iter().map(|r| r.value.clone()).collect();
    let svg = line_chart(
        &format!("F1 by {}", report.param),
        &labels,
        &[
            Series { name: "F1", values: report.rows.iter().map(|r| r.f1).collect() },
            Series { name: "baseline F1", values: report.rows.iter().map(|r| r.baseline_f1).collect() },
        ],
    );
    let p = dir.join("sweep.svg");
    fs::write(&p, svg).map_err(|e| Error::io(&p, e))
}
