//! Further training of the identifier on labeled plus augmented data.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generation::{score_order, GeneratedCandidate};
use crate::models::{pretrain_identifier, IdentifierModel, PairExample, TrainConfig, TrainLog};

/// Labeled-to-augmented ratio `a:b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    pub labeled: u32,
    pub augmented: u32,
}

impl FromStr for Ratio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("ratio must look like a:b with positive integers, got {s:?}"));
        let (a, b) = s.trim().split_once(':').ok_or_else(bad)?;
        let a: u32 = a.trim().parse().map_err(|_| bad())?;
        let b: u32 = b.trim().parse().map_err(|_| bad())?;
        if a == 0 || b == 0 {
            return Err(bad());
        }
        Ok(Ratio {
            labeled: a,
            augmented: b,
        })
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.labeled, self.augmented)
    }
}

impl Serialize for Ratio {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub ratio: Ratio,
    pub neg_rate: f64,
}

impl Default for AugmentationPlan {
    fn default() -> Self {
        AugmentationPlan {
            ratio: Ratio {
                labeled: 1,
                augmented: 2,
            },
            neg_rate: 0.5,
        }
    }
}

impl AugmentationPlan {
    pub fn parse(ratio: &str, neg_rate: f64) -> Result<Self> {
        Ok(AugmentationPlan {
            ratio: ratio.parse()?,
            neg_rate,
        })
    }

    /// Augmented examples to use alongside `labeled` labeled ones.
    pub fn augmented_count(&self, labeled: usize) -> usize {
        labeled * self.ratio.augmented as usize / self.ratio.labeled as usize
    }
}

/// Augmented examples for the mix: best-scored first when oversupplied,
/// all of them plus seeded draws with replacement when undersupplied.
pub fn select_augmented(
    augmented: &[GeneratedCandidate],
    target: usize,
    seed: u64,
) -> Vec<PairExample> {
    let mut ranked: Vec<&GeneratedCandidate> = augmented.iter().collect();
    ranked.sort_by(|a, b| score_order(a, b));
    if ranked.is_empty() {
        return Vec::new();
    }
    let mut out: Vec<PairExample> = ranked
        .iter()
        .take(target)
        .map(|c| c.to_pair_example())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while out.len() < target {
        let c = ranked[rng.gen_range(0..ranked.len())];
        out.push(c.to_pair_example());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FurtherTrainReport {
    pub labeled: usize,
    pub augmented_used: usize,
    pub log: TrainLog,
}

/// Selects augmented examples per `plan` and retrains on the mix.
pub fn further_train(
    identifier: IdentifierModel,
    augmented: &[GeneratedCandidate],
    labeled: &[PairExample],
    plan: &AugmentationPlan,
    cfg: &TrainConfig,
) -> Result<(IdentifierModel, FurtherTrainReport)> {
    if augmented.is_empty() {
        return Err(Error::Config("further training needs augmented data".into()));
    }
    let extra = select_augmented(augmented, plan.augmented_count(labeled.len()), cfg.seed);
    further_train_mix(identifier, labeled, &extra, plan, cfg)
}

/// Retrains on `labeled` plus already selected augmented examples, with the
/// plan's negative sampling rate.
pub fn further_train_mix(
    mut identifier: IdentifierModel,
    labeled: &[PairExample],
    augmented: &[PairExample],
    plan: &AugmentationPlan,
    cfg: &TrainConfig,
) -> Result<(IdentifierModel, FurtherTrainReport)> {
    let mut mix: Vec<PairExample> = labeled.to_vec();
    mix.extend(augmented.iter().cloned());
    let cfg = TrainConfig {
        neg_rate: plan.neg_rate,
        ..cfg.clone()
    };
    let log = pretrain_identifier(&mut identifier, &mix, &cfg)?;
    Ok((
        identifier,
        FurtherTrainReport {
            labeled: labeled.len(),
            augmented_used: augmented.len(),
            log,
        },
    ))
}
