//! Evaluation: classification metrics and BLEU diversity.

mod bleu;
mod metrics;

pub use bleu::{bleu_diversity, bleu_stats, BleuStats};
pub use metrics::{evaluate, f1, predict_all, Confusion, MetricsReport, RunMetrics};
