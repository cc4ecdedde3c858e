//! Flat pipeline configuration read from TOML or JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dualtrain::{AugmentationPlan, CycleOrder, DualConfig, Ratio};
use crate::error::{Error, Result};
use crate::generation::DisMode;
use crate::knowledge::SpaceConfig;
use crate::models::{
    EncoderConfig, FeatureConfig, FillOrder, GeneratorConfig, IdentifierConfig, MlmTrainConfig,
    OptimizerKind, PgObjective, TrainConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,

    pub corpus: PathBuf,
    pub lexicon: Option<PathBuf>,
    pub connectives: Option<PathBuf>,
    /// Unlabeled sentences (corpus format, relations ignored) scanned for
    /// connectives.
    pub documents: Option<PathBuf>,
    pub entity_candidates: Option<PathBuf>,
    pub out_dir: PathBuf,

    pub k: usize,
    pub test_fold: usize,
    /// Held-out development topics; empty means the first topic in sorted
    /// order.
    pub dev_topics: Vec<String>,
    pub replicates: usize,

    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub margin: f64,
    pub dims: usize,
    pub space_epochs: usize,
    pub space_lr: f64,

    pub lambda_mix: f64,
    pub gamma_mix: f64,
    pub eta: f64,
    pub lr_pretrain: f64,
    pub lr_further: f64,
    /// Multiplies `lr_pretrain`, `lr_further` and `eta`.
    pub lr_scale: f64,
    pub ratio: Ratio,
    pub neg_rate: f64,
    pub m: usize,
    pub max_candidates_per_pair: usize,

    pub encoder_dim: usize,
    pub encoder_layers: usize,
    pub max_len: usize,
    pub hidden: usize,
    pub feature_buckets: usize,
    pub max_distance: usize,
    pub causal_feature: bool,

    pub pretrain_epochs: usize,
    pub generator_epochs: usize,
    pub further_epochs: usize,
    pub batch_size: usize,
    pub generator_batch_size: usize,
    pub optimizer: OptimizerKind,

    pub dual_batch_size: usize,
    pub max_rounds: usize,
    pub patience: usize,
    /// Caps the number of dual-training items (0 keeps all), drawn with the
    /// run seed.
    pub max_dual_items: usize,
    pub pg_objective: PgObjective,
    pub reward_baseline: bool,
    pub cycle_order: CycleOrder,
    pub fill_order: FillOrder,
    pub share_encoder: bool,
    pub dis_mode: DisMode,

    pub dump_rewards: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 13,
            corpus: PathBuf::from("corpus.jsonl"),
            lexicon: None,
            connectives: None,
            documents: None,
            entity_candidates: None,
            out_dir: PathBuf::from("out"),
            k: 5,
            test_fold: 0,
            dev_topics: Vec::new(),
            replicates: 3,
            alpha: 0.30,
            beta: 0.50,
            mu: 0.2,
            margin: 1.0,
            dims: 50,
            space_epochs: 100,
            space_lr: 0.05,
            lambda_mix: 0.5,
            gamma_mix: 0.5,
            eta: 1e-7,
            lr_pretrain: 1e-5,
            lr_further: 1e-5,
            lr_scale: 1000.0,
            ratio: Ratio {
                labeled: 1,
                augmented: 2,
            },
            neg_rate: 0.5,
            m: 20,
            max_candidates_per_pair: 4,
            encoder_dim: 32,
            encoder_layers: 2,
            max_len: 64,
            hidden: 32,
            feature_buckets: 4,
            max_distance: 20,
            causal_feature: true,
            pretrain_epochs: 10,
            generator_epochs: 10,
            further_epochs: 10,
            batch_size: 16,
            generator_batch_size: 8,
            optimizer: OptimizerKind::Adam,
            dual_batch_size: 8,
            max_rounds: 10,
            patience: 2,
            max_dual_items: 0,
            pg_objective: PgObjective::LogLikelihood,
            reward_baseline: false,
            cycle_order: CycleOrder::PrimalFirst,
            fill_order: FillOrder::Ltr,
            share_encoder: false,
            dis_mode: DisMode::Similarity,
            dump_rewards: false,
        }
    }
}

impl PipelineConfig {
    /// Parses TOML, or JSON when the file ends in `.json`. Relative paths are
    /// resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str::<PipelineConfig>(&text)?
        } else {
            Self::from_toml(&text)?
        };
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.out_dir);
        for p in [
            &mut self.lexicon,
            &mut self.connectives,
            &mut self.documents,
            &mut self.entity_candidates,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return bad(format!("alpha must lie in (0, 0.5], got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad(format!("beta must lie in (0, 1], got {}", self.beta));
        }
        for (name, v) in [
            ("mu", self.mu),
            ("lambda_mix", self.lambda_mix),
            ("gamma_mix", self.gamma_mix),
            ("neg_rate", self.neg_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.k < 2 {
            return bad(format!("k must be at least 2, got {}", self.k));
        }
        if self.test_fold >= self.k {
            return bad(format!("test_fold {} is not below k = {}", self.test_fold, self.k));
        }
        if self.dims < 2 {
            return bad(format!("dims must be at least 2, got {}", self.dims));
        }
        if self.replicates == 0 {
            return bad("replicates must be positive".into());
        }
        if self.max_candidates_per_pair == 0 {
            return bad("max_candidates_per_pair must be positive".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the configuration with `out_dir` blanked.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            dim: self.encoder_dim,
            layers: self.encoder_layers,
            max_len: self.max_len,
        }
    }

    pub fn features(&self) -> FeatureConfig {
        FeatureConfig {
            max_distance: self.max_distance,
            buckets: self.feature_buckets,
            causal_feature: self.causal_feature,
        }
    }

    pub fn identifier(&self) -> IdentifierConfig {
        IdentifierConfig {
            encoder: self.encoder(),
            hidden: self.hidden,
            features: self.features(),
        }
    }

    pub fn generator(&self) -> GeneratorConfig {
        GeneratorConfig {
            encoder: self.encoder(),
            share_encoder: self.share_encoder,
            fill_order: self.fill_order,
        }
    }

    pub fn space(&self) -> SpaceConfig {
        SpaceConfig {
            dims: self.dims,
            margin: self.margin,
            epochs: self.space_epochs,
            lr: self.space_lr,
            seed: self.seed,
        }
    }

    pub fn pretrain(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.pretrain_epochs,
            lr: self.lr_pretrain * self.lr_scale,
            batch_size: self.batch_size,
            neg_rate: self.neg_rate,
            seed: self.seed,
            optimizer: self.optimizer,
        }
    }

    pub fn further(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.further_epochs,
            lr: self.lr_further * self.lr_scale,
            seed: self.seed.wrapping_add(7),
            ..self.pretrain()
        }
    }

    pub fn mlm(&self) -> MlmTrainConfig {
        MlmTrainConfig {
            epochs: self.generator_epochs,
            lr: self.lr_pretrain * self.lr_scale,
            batch_size: self.generator_batch_size,
            seed: self.seed.wrapping_add(3),
            optimizer: self.optimizer,
        }
    }

    pub fn dual(&self) -> DualConfig {
        DualConfig {
            lambda_mix: self.lambda_mix,
            gamma_mix: self.gamma_mix,
            eta: self.eta * self.lr_scale,
            batch_size: self.dual_batch_size,
            max_rounds: self.max_rounds,
            patience: self.patience,
            seed: self.seed.wrapping_add(5),
            objective: self.pg_objective,
            baseline: self.reward_baseline,
            cycle_order: self.cycle_order,
        }
    }

    pub fn plan(&self) -> AugmentationPlan {
        AugmentationPlan {
            ratio: self.ratio,
            neg_rate: self.neg_rate,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_mirror_the_reported_settings() {
        let c = PipelineConfig::default();
        assert_eq!(c.ratio.to_string(), "1:2");
        assert_eq!((c.alpha, c.beta, c.mu, c.lambda_mix, c.gamma_mix), (0.30, 0.50, 0.2, 0.5, 0.5));
        assert_eq!(c.neg_rate, 0.5);
        assert_eq!((c.lr_pretrain, c.lr_further, c.eta), (1e-5, 1e-5, 1e-7));
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let c = PipelineConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), c);
        let p = PipelineConfig::from_toml("alpha = 0.4\nratio = \"1:4\"\n").unwrap();
        assert_eq!(p.alpha, 0.4);
        assert_eq!(p.ratio.augmented, 4);
        assert!(PipelineConfig::from_toml("alfa = 0.4\n").is_err());
    }

    #[test]
    fn hash_ignores_output_directory() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.out_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.beta = 0.6;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut c = PipelineConfig { alpha: 0.6, ..Default::default() };
        assert!(c.validate().is_err());
        c.alpha = 0.3;
        c.test_fold = 5;
        assert!(c.validate().is_err());
    }
}
