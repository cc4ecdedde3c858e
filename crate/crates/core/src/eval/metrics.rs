//! Precision, recall and F1 with causal as the positive class.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::RelationLabel;
use crate::error::{Error, Result};
use crate::models::{predicted_label, IdentifierModel, PairExample};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_labels(pairs: impl IntoIterator<Item = (RelationLabel, RelationLabel)>) -> Self {
        let mut c = Confusion::default();
        for (pred, gold) in pairs {
            match (pred.is_causal(), gold.is_causal()) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub fold: usize,
    pub replicate: usize,
    pub seed: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub runs: Vec<RunMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicate: Option<usize>,
}

impl MetricsReport {
    pub fn from_confusion(c: Confusion) -> Self {
        MetricsReport {
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            confusion: c,
            runs: Vec::new(),
            replicate: None,
        }
    }

    /// Macro average over runs (P, R and F1 each averaged).
    pub fn aggregate(runs: Vec<RunMetrics>) -> Self {
        let n = runs.len().max(1) as f64;
        let mean = |f: fn(&RunMetrics) -> f64| runs.iter().map(f).sum::<f64>() / n;
        MetricsReport {
            precision: mean(|r| r.precision),
            recall: mean(|r| r.recall),
            f1: mean(|r| r.f1),
            confusion: Confusion::default(),
            runs,
            replicate: None,
        }
    }
}

/// Predicted labels for `data`, in order.
pub fn predict_all(identifier: &IdentifierModel, data: &[PairExample]) -> Result<Vec<RelationLabel>> {
    data.par_iter()
        .map(|ex| identifier.predict(ex).map(|p| predicted_label(p).0))
        .collect()
}

pub fn evaluate(identifier: &IdentifierModel, test: &[PairExample]) -> Result<MetricsReport> {
    if test.is_empty() {
        return Err(Error::Config("evaluation set is empty".into()));
    }
    let preds = predict_all(identifier, test)?;
    Ok(MetricsReport::from_confusion(Confusion::from_labels(
        preds.into_iter().zip(test.iter().map(|e| e.label)),
    )))
}
