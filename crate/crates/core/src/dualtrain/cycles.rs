//! Primal (generator-rewarding) and dual (identifier-rewarding) cycles.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedExample, RelationLabel, Span};
use crate::dualtrain::rewards::{
    mix_dual, mix_primal, reward_from_probs, semantic_alignment_reward, Cycle, RewardRecord,
};
use crate::error::{Error, Result};
use crate::generation::{ppl, splice, Skeleton};
use crate::knowledge::CandidatePair;
use crate::models::{
    fill_masks, predicted_label, sequence_objective, GeneratorPair, Grads, IdentifierModel,
    PairExample, PgObjective,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CycleOrder {
    #[default]
    PrimalFirst,
    DualFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DualConfig {
    pub lambda_mix: f64,
    pub gamma_mix: f64,
    pub eta: f64,
    pub batch_size: usize,
    pub max_rounds: usize,
    pub patience: usize,
    pub seed: u64,
    pub objective: PgObjective,
    /// Subtract the batch-mean reward before weighting gradients.
    pub baseline: bool,
    pub cycle_order: CycleOrder,
}

impl Default for DualConfig {
    fn default() -> Self {
        DualConfig {
            lambda_mix: 0.5,
            gamma_mix: 0.5,
            eta: 1e-7,
            batch_size: 8,
            max_rounds: 10,
            patience: 2,
            seed: 13,
            objective: PgObjective::LogLikelihood,
            baseline: false,
            cycle_order: CycleOrder::PrimalFirst,
        }
    }
}

/// One dual-training example: the pair's skeleton, its sentence `s` and the
/// gold relation.
#[derive(Debug, Clone, PartialEq)]
pub struct DualItem {
    pub id: String,
    pub skeleton: Skeleton,
    pub sentence: PairExample,
    pub gold: RelationLabel,
}

/// The origin sentence with the pair's lemmas written into its two event
/// slots; entities and every other token are kept.
pub fn substituted_sentence(pair: &CandidatePair, original: &AnnotatedExample) -> Result<PairExample> {
    let (id1, id2) = &pair.origin_events;
    let find = |id: &str| {
        original.event(id).ok_or_else(|| {
            Error::Structure(format!("event {id} missing from sentence {}", original.id))
        })
    };
    let (a, b) = (find(id1)?, find(id2)?);
    let words = |l: &str| -> Vec<String> { l.split('_').filter(|s| !s.is_empty()).map(str::to_string).collect() };
    let (w1, w2) = (words(&pair.e1), words(&pair.e2));
    // Replace the later span first so the earlier one keeps its offsets.
    let (tokens, s1, s2) = if a.span.start < b.span.start {
        let (t, s2) = splice(&original.tokens, b.span, &w2);
        let (t, s1) = splice(&t, a.span, &w1);
        let shift = s1.len() as isize - a.span.len() as isize;
        let s2 = Span::new((s2.start as isize + shift) as usize, (s2.end as isize + shift) as usize);
        (t, s1, s2)
    } else {
        let (t, s1) = splice(&original.tokens, a.span, &w1);
        let (t, s2) = splice(&t, b.span, &w2);
        let shift = s2.len() as isize - b.span.len() as isize;
        let s1 = Span::new((s1.start as isize + shift) as usize, (s1.end as isize + shift) as usize);
        (t, s1, s2)
    };
    Ok(PairExample {
        id: format!("{}:{}:{}", original.id, pair.e1, pair.e2),
        tokens,
        span1: s1,
        span2: s2,
        lemma1: pair.e1.clone(),
        lemma2: pair.e2.clone(),
        label: pair.provisional_label,
    })
}

fn weights(records: &[RewardRecord], baseline: bool) -> Vec<f64> {
    let mean = if baseline && !records.is_empty() {
        records.iter().map(|r| r.mixed).sum::<f64>() / records.len() as f64
    } else {
        0.0
    };
    records.iter().map(|r| r.mixed - mean).collect()
}

/// Generates `s′` for every item with the gold-relation generator, rewards
/// it, and applies one reward-weighted ascent step to each generator that
/// saw an item. The identifier is read only.
pub fn primal_cycle(
    batch: &[DualItem],
    generators: &mut GeneratorPair,
    identifier: &IdentifierModel,
    cfg: &DualConfig,
    round: usize,
) -> Result<Vec<RewardRecord>> {
    if batch.is_empty() {
        return Ok(Vec::new());
    }
    let gens = &*generators;
    let results: Vec<(RewardRecord, Grads)> = batch
        .par_iter()
        .map(|item| {
            let fill = fill_masks(gens, item.gold, &item.skeleton.tokens);
            let r_s = ppl(&fill.probs);
            let generated = PairExample {
                id: item.id.clone(),
                tokens: fill.tokens.clone(),
                span1: item.skeleton.event_slots[0],
                span2: item.skeleton.event_slots[1],
                lemma1: item.skeleton.origin.e1.clone(),
                lemma2: item.skeleton.origin.e2.clone(),
                label: item.gold,
            };
            let r_c = reward_from_probs(identifier.predict(&generated)?, item.gold);
            let (_, grads) = sequence_objective(gens.get(item.gold), &fill.steps, cfg.objective);
            Ok((
                RewardRecord {
                    pair_id: item.id.clone(),
                    cycle: Cycle::Primal,
                    r_c,
                    r_s,
                    mixed: mix_primal(cfg.lambda_mix, r_s, r_c),
                    round,
                },
                grads,
            ))
        })
        .collect::<Result<_>>()?;
    let records: Vec<RewardRecord> = results.iter().map(|(r, _)| r.clone()).collect();
    let w = weights(&records, cfg.baseline);
    for label in [RelationLabel::Causal, RelationLabel::NonCausal] {
        let mut acc = Grads::new(generators.get(label).params());
        let mut touched = false;
        for ((item, (_, g)), &wi) in batch.iter().zip(&results).zip(&w) {
            if item.gold == label && wi != 0.0 {
                acc.add_scaled(g, wi);
                touched = true;
            }
        }
        if touched {
            generators.apply(label, &acc, cfg.eta);
        }
    }
    Ok(records)
}

/// Lets the identifier predict `c′` on each `s`, re-generates under `c′` for
/// the alignment reward, and applies one reward-weighted ascent step to the
/// identifier. Generators are read only.
pub fn dual_cycle(
    batch: &[DualItem],
    generators: &GeneratorPair,
    identifier: &mut IdentifierModel,
    cfg: &DualConfig,
    round: usize,
) -> Result<Vec<RewardRecord>> {
    if batch.is_empty() {
        return Ok(Vec::new());
    }
    let model = &*identifier;
    let scored: Vec<(RewardRecord, RelationLabel)> = batch
        .par_iter()
        .map(|item| {
            let probs = model.predict(&item.sentence)?;
            let (pred, _) = predicted_label(probs);
            let r_c = reward_from_probs(probs, item.gold);
            let (r_s, _) = semantic_alignment_reward(generators, pred, &item.skeleton);
            Ok((
                RewardRecord {
                    pair_id: item.id.clone(),
                    cycle: Cycle::Dual,
                    r_c,
                    r_s,
                    mixed: mix_dual(cfg.gamma_mix, r_c, r_s),
                    round,
                },
                pred,
            ))
        })
        .collect::<Result<_>>()?;
    let records: Vec<RewardRecord> = scored.iter().map(|(r, _)| r.clone()).collect();
    let w = weights(&records, cfg.baseline);
    let probability = cfg.objective == PgObjective::Probability;
    let grads: Vec<Grads> = batch
        .par_iter()
        .zip(&scored)
        .zip(&w)
        .filter(|(_, &wi)| wi != 0.0)
        .map(|((item, (_, pred)), &wi)| {
            model
                .weighted_log_likelihood(&[(&item.sentence, *pred, wi)], probability)
                .map(|(_, g)| g)
        })
        .collect::<Result<_>>()?;
    if !grads.is_empty() {
        let mut acc = Grads::new(identifier.params());
        for g in &grads {
            acc.add_scaled(g, 1.0);
        }
        identifier.params_mut().apply(&acc, cfg.eta);
    }
    Ok(records)
}
