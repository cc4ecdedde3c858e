//! Round loop with dev-set early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dualtrain::cycles::{dual_cycle, primal_cycle, CycleOrder, DualConfig, DualItem};
use crate::dualtrain::rewards::RewardRecord;
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricsReport};
use crate::models::{GeneratorPair, IdentifierModel, PairExample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub dev_p: f64,
    pub dev_r: f64,
    pub dev_f1: f64,
    pub mean_reward_primal: f64,
    pub mean_reward_dual: f64,
}

/// Stops once the score has failed to improve on the best so far for
/// `patience` consecutive observations.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopper {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            best: None,
            stale: 0,
        }
    }

    /// Records `score` for `round`; returns true when training should stop.
    pub fn observe(&mut self, round: usize, score: f64) -> bool {
        match self.best {
            Some((_, b)) if score <= b => self.stale += 1,
            _ => {
                self.best = Some((round, score));
                self.stale = 0;
            }
        }
        self.stale >= self.patience.max(1)
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }

    pub fn is_new_best(&self, round: usize) -> bool {
        self.best.map(|(r, _)| r) == Some(round)
    }
}

#[derive(Debug, Clone)]
pub struct DualOutcome {
    pub generators: GeneratorPair,
    pub identifier: IdentifierModel,
    pub rounds: Vec<RoundLog>,
    pub best_round: Option<usize>,
    pub rewards: Vec<RewardRecord>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Alternates the two cycles over seeded batches each round and returns the
/// models from the round with the best dev F1.
pub fn dual_train(
    items: &[DualItem],
    generators: GeneratorPair,
    identifier: IdentifierModel,
    dev: &[PairExample],
    cfg: &DualConfig,
) -> Result<DualOutcome> {
    if dev.is_empty() {
        return Err(Error::Config("dual training needs a non-empty dev set".into()));
    }
    dual_train_with(items, generators, identifier, cfg, |m, _| evaluate(m, dev))
}

/// [`dual_train`] with a caller-supplied dev evaluation.
pub fn dual_train_with(
    items: &[DualItem],
    mut generators: GeneratorPair,
    mut identifier: IdentifierModel,
    cfg: &DualConfig,
    mut dev_eval: impl FnMut(&IdentifierModel, usize) -> Result<MetricsReport>,
) -> Result<DualOutcome> {
    let mut outcome = DualOutcome {
        generators: generators.clone(),
        identifier: identifier.clone(),
        rounds: Vec::new(),
        best_round: None,
        rewards: Vec::new(),
    };
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let bs = cfg.batch_size.max(1);
    for round in 1..=cfg.max_rounds {
        order.shuffle(&mut rng);
        let mut primal = Vec::new();
        let mut dual = Vec::new();
        for chunk in order.chunks(bs) {
            let batch: Vec<DualItem> = chunk.iter().map(|&i| items[i].clone()).collect();
            match cfg.cycle_order {
                CycleOrder::PrimalFirst => {
                    primal.extend(primal_cycle(&batch, &mut generators, &identifier, cfg, round)?);
                    dual.extend(dual_cycle(&batch, &generators, &mut identifier, cfg, round)?);
                }
                CycleOrder::DualFirst => {
                    dual.extend(dual_cycle(&batch, &generators, &mut identifier, cfg, round)?);
                    primal.extend(primal_cycle(&batch, &mut generators, &identifier, cfg, round)?);
                }
            }
        }
        let m = dev_eval(&identifier, round)?;
        outcome.rounds.push(RoundLog {
            round,
            dev_p: m.precision,
            dev_r: m.recall,
            dev_f1: m.f1,
            mean_reward_primal: mean(primal.iter().map(|r| r.mixed)),
            mean_reward_dual: mean(dual.iter().map(|r| r.mixed)),
        });
        outcome.rewards.extend(primal);
        outcome.rewards.extend(dual);
        let stop = stopper.observe(round, m.f1);
        if stopper.is_new_best(round) {
            outcome.generators = generators.clone();
            outcome.identifier = identifier.clone();
            outcome.best_round = Some(round);
        }
        if stop {
            break;
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worsening_scores_stop_after_round_two_with_patience_one() {
        let mut s = EarlyStopper::new(1);
        assert!(!s.observe(1, 0.5));
        assert!(s.observe(2, 0.4));
        assert_eq!(s.best(), Some((1, 0.5)));
    }

    #[test]
    fn improvement_resets_patience() {
        let mut s = EarlyStopper::new(2);
        let scores = [0.1, 0.2, 0.2, 0.3, 0.25, 0.25];
        let stops: Vec<bool> = scores.iter().enumerate().map(|(i, &f)| s.observe(i + 1, f)).collect();
        assert_eq!(stops, [false, false, false, false, false, true]);
        assert_eq!(s.best(), Some((4, 0.3)));
    }
}
