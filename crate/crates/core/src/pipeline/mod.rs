//! Staged, resumable pipeline runs, cross-validation and sweeps.

mod config;
mod manifest;
mod report;
mod run;
mod stages;

pub use config::PipelineConfig;
pub use manifest::{read_manifest, run_stage, sha256_file, FileHash, StageManifest, StageStatus};
pub use report::{line_chart, read_csv, write_csv, Series};
pub use run::{
    cross_validate, run_pipeline, sweep, with_param, write_sweep, CvReport, SweepReport, SweepRow,
    SWEEP_HEADER, SWEEP_PARAMS,
};
pub use stages::*;
