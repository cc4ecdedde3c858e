//! Causality and semantic-alignment rewards and their mixing.

use serde::{Deserialize, Serialize};

use crate::corpus::RelationLabel;
use crate::error::Result;
use crate::generation::{complete_sentence, GeneratedCandidate, Skeleton};
use crate::models::{predicted_label, GeneratorPair, IdentifierModel, PairExample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cycle {
    Primal,
    Dual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub pair_id: String,
    pub cycle: Cycle,
    pub r_c: f64,
    pub r_s: f64,
    pub mixed: f64,
    pub round: usize,
}

/// `+p` when the predicted class matches `gold`, else `−p`, where `p` is the
/// predicted class's probability.
pub fn reward_from_probs(probs: [f64; 2], gold: RelationLabel) -> f64 {
    let (pred, p) = predicted_label(probs);
    if pred == gold {
        p
    } else {
        -p
    }
}

pub fn causality_reward(
    identifier: &IdentifierModel,
    sentence: &PairExample,
    gold: RelationLabel,
) -> Result<f64> {
    Ok(reward_from_probs(identifier.predict(sentence)?, gold))
}

/// Mean fill probability of a completion (1.0 for nothing filled).
pub fn alignment_from_probs(fill_probs: &[f64]) -> f64 {
    crate::generation::ppl(fill_probs)
}

/// Completes `skeleton` under `relation` and returns the mean fill
/// probability together with the completion.
pub fn semantic_alignment_reward(
    generators: &GeneratorPair,
    relation: RelationLabel,
    skeleton: &Skeleton,
) -> (f64, GeneratedCandidate) {
    let mut sk = skeleton.clone();
    sk.relation = relation;
    let cand = complete_sentence(generators, &sk, format!("{}:{}", sk.origin.e1, sk.origin.e2));
    (alignment_from_probs(&cand.fill_probs), cand)
}

/// `λ·R_s + (1−λ)·R_c`
pub fn mix_primal(lambda: f64, r_s: f64, r_c: f64) -> f64 {
    lambda * r_s + (1.0 - lambda) * r_c
}

/// `γ·R_c + (1−γ)·R_s`
pub fn mix_dual(gamma: f64, r_c: f64, r_s: f64) -> f64 {
    gamma * r_c + (1.0 - gamma) * r_s
}
