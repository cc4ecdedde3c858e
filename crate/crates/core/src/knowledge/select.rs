//! Distance ranking and top/bottom-α selection of candidate pairs.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::RelationLabel;
use crate::error::{Error, Result};
use crate::knowledge::{causal_distance, CandidatePair, CausalSpaceModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub pair: CandidatePair,
    pub distance: f64,
}

/// Row of the selected-pairs JSONL artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedPairRecord {
    pub e1: String,
    pub e2: String,
    pub label: RelationLabel,
    pub distance: f64,
    pub provenance: crate::knowledge::Provenance,
    pub origin_id: String,
    pub origin_events: (String, String),
}

impl From<&ScoredPair> for SelectedPairRecord {
    fn from(s: &ScoredPair) -> Self {
        SelectedPairRecord {
            e1: s.pair.e1.clone(),
            e2: s.pair.e2.clone(),
            label: s.pair.provisional_label,
            distance: s.distance,
            provenance: s.pair.provenance,
            origin_id: s.pair.origin_id.clone(),
            origin_events: s.pair.origin_events.clone(),
        }
    }
}

impl From<&SelectedPairRecord> for ScoredPair {
    fn from(r: &SelectedPairRecord) -> Self {
        ScoredPair {
            pair: CandidatePair {
                e1: r.e1.clone(),
                e2: r.e2.clone(),
                provisional_label: r.label,
                provenance: r.provenance,
                origin_id: r.origin_id.clone(),
                origin_events: r.origin_events.clone(),
            },
            distance: r.distance,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub total: usize,
    pub oov_dropped: usize,
    pub ranked: usize,
    pub per_take: usize,
    /// provenance → (ranked, selected causal, selected non-causal)
    pub composition: BTreeMap<String, [usize; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub causal: Vec<ScoredPair>,
    pub noncausal: Vec<ScoredPair>,
    pub report: SelectionReport,
}

/// Total order: distance, then lemma pair, then the remaining pair fields.
pub fn rank_order(a: &ScoredPair, b: &ScoredPair) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then_with(|| a.pair.key().cmp(&b.pair.key()))
        .then_with(|| a.pair.cmp(&b.pair))
}

/// Sorts the pool by causal distance (OOV pairs dropped) and keeps the first
/// and last ⌊α·N⌋ entries, relabelled causal and non-causal.
pub fn rank_and_select(
    pairs: &[CandidatePair],
    model: &CausalSpaceModel,
    alpha: f64,
) -> Result<Selection> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::Config(format!("alpha must lie in (0, 0.5], got {alpha}")));
    }
    let mut report = SelectionReport {
        total: pairs.len(),
        ..Default::default()
    };
    let mut scored = Vec::with_capacity(pairs.len());
    for p in pairs {
        match causal_distance(model, &p.e1, &p.e2) {
            Ok(distance) => scored.push(ScoredPair {
                pair: p.clone(),
                distance,
            }),
            Err(Error::OutOfVocabulary(_)) => report.oov_dropped += 1,
            Err(e) => return Err(e),
        }
    }
    scored.sort_by(rank_order);
    let n = scored.len();
    let take = (alpha * n as f64 + 1e-9).floor() as usize;
    report.ranked = n;
    report.per_take = take;
    for s in &scored {
        report
            .composition
            .entry(s.pair.provenance.as_str().to_string())
            .or_default()[0] += 1;
    }
    let relabel = |s: &ScoredPair, label: RelationLabel| {
        let mut s = s.clone();
        s.pair.provisional_label = label;
        s
    };
    let causal: Vec<ScoredPair> = scored[..take]
        .iter()
        .map(|s| relabel(s, RelationLabel::Causal))
        .collect();
    let noncausal: Vec<ScoredPair> = scored[n - take..]
        .iter()
        .map(|s| relabel(s, RelationLabel::NonCausal))
        .collect();
    for s in &causal {
        report.composition.get_mut(s.pair.provenance.as_str()).unwrap()[1] += 1;
    }
    for s in &noncausal {
        report.composition.get_mut(s.pair.provenance.as_str()).unwrap()[2] += 1;
    }
    Ok(Selection {
        causal,
        noncausal,
        report,
    })
}
