//! Relation-conditioned mask-fill generators.

use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedExample, RelationLabel};
use crate::error::{Error, Result};
use crate::models::backend::{EncoderConfig, MaskFiller, TinyBackend};
use crate::models::optim::{Optimizer, OptimizerKind};
use crate::models::params::{Checkpoint, CheckpointHeader, Grads, TensorMeta};
use crate::models::tape::Tape;
use crate::models::vocab::{Vocab, MASK, SPECIALS};

pub const MASK_TOKEN: &str = SPECIALS[MASK];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FillOrder {
    #[default]
    Ltr,
    Confidence,
}

/// Per-sentence generation objective used for reward-weighted updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PgObjective {
    /// Mean log-probability of the filled tokens.
    #[default]
    LogLikelihood,
    /// Mean probability of the filled tokens.
    Probability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub encoder: EncoderConfig,
    pub share_encoder: bool,
    pub fill_order: FillOrder,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            encoder: EncoderConfig::default(),
            share_encoder: false,
            fill_order: FillOrder::Ltr,
        }
    }
}

/// Causal and non-causal generators over one vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorPair {
    cfg: GeneratorConfig,
    causal: TinyBackend,
    noncausal: TinyBackend,
    seed: u64,
}

impl GeneratorPair {
    pub fn new(cfg: GeneratorConfig, vocab: Arc<Vocab>, seed: u64) -> Self {
        let causal = TinyBackend::new(cfg.encoder.clone(), vocab.clone(), seed);
        let mut noncausal = TinyBackend::new(cfg.encoder.clone(), vocab, seed.wrapping_add(1));
        if cfg.share_encoder {
            let slots = causal.encoder_slots();
            noncausal.params_mut().copy_slots_from(causal.params(), &slots);
        }
        GeneratorPair {
            cfg,
            causal,
            noncausal,
            seed,
        }
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn vocab(&self) -> &Arc<Vocab> {
        self.causal.vocab_arc()
    }

    pub fn get(&self, relation: RelationLabel) -> &TinyBackend {
        match relation {
            RelationLabel::Causal => &self.causal,
            RelationLabel::NonCausal => &self.noncausal,
        }
    }

    pub fn get_mut(&mut self, relation: RelationLabel) -> &mut TinyBackend {
        match relation {
            RelationLabel::Causal => &mut self.causal,
            RelationLabel::NonCausal => &mut self.noncausal,
        }
    }

    /// Applies `θ ← θ + step·g` to one generator, mirroring encoder slots to
    /// the other when the encoder is shared.
    pub fn apply(&mut self, relation: RelationLabel, grads: &Grads, step: f64) {
        self.get_mut(relation).params_mut().apply(grads, step);
        self.sync_from(relation);
    }

    fn sync_from(&mut self, relation: RelationLabel) {
        if !self.cfg.share_encoder {
            return;
        }
        let slots = self.causal.encoder_slots();
        match relation {
            RelationLabel::Causal => {
                let src = self.causal.params().clone();
                self.noncausal.params_mut().copy_slots_from(&src, &slots);
            }
            RelationLabel::NonCausal => {
                let src = self.noncausal.params().clone();
                self.causal.params_mut().copy_slots_from(&src, &slots);
            }
        }
    }

    pub fn checksums(&self) -> (String, String) {
        (self.causal.checksum(), self.noncausal.checksum())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tensors = Vec::new();
        let mut data = Vec::new();
        for (prefix, g) in [("causal", &self.causal), ("noncausal", &self.noncausal)] {
            for p in g.params().iter() {
                tensors.push(TensorMeta {
                    name: format!("{prefix}.{}", p.name),
                    shape: [p.rows, p.cols],
                });
                data.push(p.data.clone());
            }
        }
        let vocab = self.vocab();
        Checkpoint {
            header: CheckpointHeader {
                kind: "generators".into(),
                config: serde_json::to_value(&self.cfg)?,
                vocab: vocab.tokens().to_vec(),
                vocab_hash: vocab.hash(),
                seed: self.seed,
                tensors,
                extra: serde_json::Value::Null,
            },
            data,
        }
        .save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        if ck.header.kind != "generators" {
            return Err(Error::Checkpoint(format!(
                "{}: expected a generators checkpoint, found {}",
                path.display(),
                ck.header.kind
            )));
        }
        let cfg: GeneratorConfig = serde_json::from_value(ck.header.config.clone())?;
        let vocab = Arc::new(Vocab::from_tokens(ck.header.vocab.clone())?);
        if vocab.hash() != ck.header.vocab_hash {
            return Err(Error::Checkpoint("vocabulary hash mismatch".into()));
        }
        let mut pair = GeneratorPair::new(cfg, vocab, ck.header.seed);
        let n = pair.causal.params().len();
        if ck.header.tensors.len() != 2 * n {
            return Err(Error::Checkpoint("generator tensor count mismatch".into()));
        }
        let strip = |metas: &[TensorMeta], prefix: &str| -> Result<Vec<TensorMeta>> {
            metas
                .iter()
                .map(|m| {
                    m.name
                        .strip_prefix(prefix)
                        .map(|name| TensorMeta {
                            name: name.to_string(),
                            shape: m.shape,
                        })
                        .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor {}", m.name)))
                })
                .collect()
        };
        let mut data = ck.data;
        let rest = data.split_off(n);
        let cm = strip(&ck.header.tensors[..n], "causal.")?;
        let nm = strip(&ck.header.tensors[n..], "noncausal.")?;
        pair.causal.params_mut().load_values(&cm, data)?;
        pair.noncausal.params_mut().load_values(&nm, rest)?;
        Ok(pair)
    }
}

/// One greedy decoding step: the context it saw and the token it chose.
#[derive(Debug, Clone, PartialEq)]
pub struct FillStep {
    pub context: Vec<usize>,
    pub position: usize,
    pub token: usize,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FillResult {
    pub tokens: Vec<String>,
    /// Filled positions, ascending.
    pub positions: Vec<usize>,
    /// Probability of the chosen token, aligned with `positions`.
    pub probs: Vec<f64>,
    /// Steps in decoding order.
    pub steps: Vec<FillStep>,
}

fn argmax(row: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &p) in row.iter().enumerate() {
        if p > best.1 {
            best = (i, p);
        }
    }
    best
}

/// Greedy mask filling with an arbitrary backend.
pub fn fill_with<S: AsRef<str>>(
    backend: &dyn MaskFiller,
    order: FillOrder,
    skeleton: &[S],
) -> FillResult {
    let vocab = backend.vocab();
    let mut ids: Vec<usize> = skeleton
        .iter()
        .map(|t| {
            if t.as_ref() == MASK_TOKEN {
                MASK
            } else {
                vocab.id(t.as_ref())
            }
        })
        .collect();
    let mut pending: Vec<usize> = (0..ids.len()).filter(|&i| ids[i] == MASK).collect();
    let mut steps = Vec::with_capacity(pending.len());
    while !pending.is_empty() {
        let dist = backend.fill_distributions(&ids);
        let (slot, (token, prob)) = match order {
            FillOrder::Ltr => (0, argmax(dist.row(pending[0]))),
            FillOrder::Confidence => {
                let mut best = (0, (0, f64::NEG_INFINITY));
                for (k, &pos) in pending.iter().enumerate() {
                    let c = argmax(dist.row(pos));
                    if c.1 > best.1 .1 {
                        best = (k, c);
                    }
                }
                best
            }
        };
        let position = pending.remove(slot);
        steps.push(FillStep {
            context: ids.clone(),
            position,
            token,
            prob,
        });
        ids[position] = token;
    }
    let mut order_pos: Vec<(usize, f64)> = steps.iter().map(|s| (s.position, s.prob)).collect();
    order_pos.sort_by_key(|&(p, _)| p);
    let tokens = skeleton
        .iter()
        .zip(&ids)
        .map(|(orig, &id)| {
            if orig.as_ref() == MASK_TOKEN {
                vocab.token(id).to_string()
            } else {
                orig.as_ref().to_string()
            }
        })
        .collect();
    FillResult {
        tokens,
        positions: order_pos.iter().map(|p| p.0).collect(),
        probs: order_pos.iter().map(|p| p.1).collect(),
        steps,
    }
}

/// Fills `[MASK]` sentinels with the generator matching `relation`.
pub fn fill_masks<S: AsRef<str>>(
    generators: &GeneratorPair,
    relation: RelationLabel,
    skeleton: &[S],
) -> FillResult {
    fill_with(
        generators.get(relation),
        generators.cfg.fill_order,
        skeleton,
    )
}

/// String-labelled entry point; unknown labels are routing errors.
pub fn fill_masks_by_name<S: AsRef<str>>(
    generators: &GeneratorPair,
    relation: &str,
    skeleton: &[S],
) -> Result<FillResult> {
    let label: RelationLabel = relation.parse()?;
    Ok(fill_masks(generators, label, skeleton))
}

/// Mean (log-)probability of the decoding steps under `backend`, and its
/// gradient. Zero steps give value 0 and an empty gradient.
pub fn sequence_objective(
    backend: &TinyBackend,
    steps: &[FillStep],
    objective: PgObjective,
) -> (f64, Grads) {
    let mut grads = Grads::new(backend.params());
    let mut total = 0.0;
    let w = 1.0 / steps.len().max(1) as f64;
    for s in steps {
        let mut tape = Tape::new(backend.params());
        let lp = backend.log_probs(&mut tape, &s.context);
        let mut term = tape.pick(lp, s.position, s.token);
        if objective == PgObjective::Probability {
            term = tape.exp(term);
        }
        let obj = tape.weighted_sum(&[(term, w)]);
        total += tape.value(obj).scalar();
        grads.add_scaled(&tape.backward(obj), 1.0);
    }
    (total, grads)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlmTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for MlmTrainConfig {
    fn default() -> Self {
        MlmTrainConfig {
            epochs: 10,
            lr: 1e-3,
            batch_size: 8,
            seed: 13,
            optimizer: OptimizerKind::Adam,
        }
    }
}

/// Masked input with its (position, original token) targets.
#[derive(Debug, Clone, PartialEq)]
pub struct MlmExample {
    pub id: String,
    pub input: Vec<usize>,
    pub targets: Vec<(usize, usize)>,
}

/// Keeps event and entity tokens, masks every cohesive token. Sentences
/// without events yield `None`.
pub fn mlm_example(vocab: &Vocab, ex: &AnnotatedExample) -> Option<MlmExample> {
    if ex.events.is_empty() {
        return None;
    }
    let mut keep = vec![false; ex.tokens.len()];
    let spans = ex
        .events
        .iter()
        .map(|e| e.span)
        .chain(ex.entities.iter().map(|e| e.span));
    for s in spans {
        for k in &mut keep[s.start..s.end.min(ex.tokens.len())] {
            *k = true;
        }
    }
    let ids = vocab.encode(&ex.tokens);
    let mut input = ids.clone();
    let mut targets = Vec::new();
    for i in 0..ids.len() {
        if !keep[i] {
            input[i] = MASK;
            if !Vocab::is_special(ids[i]) {
                targets.push((i, ids[i]));
            }
        }
    }
    Some(MlmExample {
        id: ex.id.clone(),
        input,
        targets,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratorPretrainLog {
    pub causal_ids: Vec<String>,
    pub noncausal_ids: Vec<String>,
    pub causal_losses: Vec<f64>,
    pub noncausal_losses: Vec<f64>,
    pub skipped: Vec<String>,
}

/// Trains each generator on its own relation's sentences by masked-token
/// cross-entropy.
pub fn pretrain_generators(
    generators: &mut GeneratorPair,
    causal_sents: &[AnnotatedExample],
    noncausal_sents: &[AnnotatedExample],
    cfg: &MlmTrainConfig,
) -> Result<GeneratorPretrainLog> {
    if causal_sents.is_empty() || noncausal_sents.is_empty() {
        return Err(Error::Config(
            "generator pre-training needs both causal and non-causal sentences".into(),
        ));
    }
    let vocab = generators.vocab().clone();
    let mut log = GeneratorPretrainLog::default();
    let mut build = |sents: &[AnnotatedExample]| -> Vec<MlmExample> {
        sents
            .iter()
            .filter_map(|s| {
                let m = mlm_example(&vocab, s);
                if m.is_none() {
                    log::warn!("sentence {} has no event spans; skipped", s.id);
                    log.skipped.push(s.id.clone());
                }
                m
            })
            .filter(|m| !m.targets.is_empty())
            .collect()
    };
    let data_c = build(causal_sents);
    let data_n = build(noncausal_sents);
    log.causal_ids = data_c.iter().map(|m| m.id.clone()).collect();
    log.noncausal_ids = data_n.iter().map(|m| m.id.clone()).collect();

    let mut rng_c = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rng_n = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut opt_c = Optimizer::new(cfg.optimizer, generators.causal.params());
    let mut opt_n = Optimizer::new(cfg.optimizer, generators.noncausal.params());
    let bs = cfg.batch_size.max(1);
    for _ in 0..cfg.epochs {
        for (label, data, rng, opt) in [
            (RelationLabel::Causal, &data_c, &mut rng_c, &mut opt_c),
            (RelationLabel::NonCausal, &data_n, &mut rng_n, &mut opt_n),
        ] {
            let mut order: Vec<&MlmExample> = data.iter().collect();
            order.shuffle(rng);
            let mut total = 0.0;
            for batch in order.chunks(bs) {
                let g = generators.get(label);
                let mut grads = Grads::new(g.params());
                for m in batch {
                    let (loss, gm) = g.mlm_loss(&m.input, &m.targets);
                    total += loss;
                    grads.add_scaled(&gm, 1.0 / batch.len() as f64);
                }
                opt.step(generators.get_mut(label).params_mut(), &grads, cfg.lr);
                generators.sync_from(label);
            }
            let mean = total / order.len().max(1) as f64;
            match label {
                RelationLabel::Causal => log.causal_losses.push(mean),
                RelationLabel::NonCausal => log.noncausal_losses.push(mean),
            }
        }
    }
    Ok(log)
}
