//! Event-pair causality identifier: encoder event vectors plus proxy features
//! into a small classification head.

use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{enumerate_pairs, AnnotatedExample, RelationLabel, Span};
use crate::error::{Error, Result};
use crate::knowledge::{causal_distance, CausalSpaceModel};
use crate::models::backend::{EncoderBackend, EncoderConfig, EncoderSlots};
use crate::models::optim::{Optimizer, OptimizerKind};
use crate::models::params::{Checkpoint, CheckpointHeader, Grads, ParamSet};
use crate::models::tape::{NodeId, Tape};
use crate::models::tensor::Matrix;
use crate::models::vocab::Vocab;

/// One classification instance: a sentence with two event spans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairExample {
    pub id: String,
    pub tokens: Vec<String>,
    pub span1: Span,
    pub span2: Span,
    pub lemma1: String,
    pub lemma2: String,
    pub label: RelationLabel,
}

impl PairExample {
    /// Every enumerated event pair of an annotated sentence.
    pub fn from_annotated(ex: &AnnotatedExample) -> Vec<PairExample> {
        enumerate_pairs(ex)
            .into_iter()
            .map(|p| {
                let a = ex.event(&p.e1).expect("enumerated event exists");
                let b = ex.event(&p.e2).expect("enumerated event exists");
                PairExample {
                    id: format!("{}:{}:{}", ex.id, a.id, b.id),
                    tokens: ex.tokens.clone(),
                    span1: a.span,
                    span2: b.span,
                    lemma1: a.lemma.clone(),
                    lemma2: b.lemma.clone(),
                    label: p.label,
                }
            })
            .collect()
    }

    pub fn from_corpus(corpus: &[AnnotatedExample]) -> Vec<PairExample> {
        corpus.iter().flat_map(PairExample::from_annotated).collect()
    }

    pub fn check(&self) -> Result<()> {
        self.span1.check(self.tokens.len())?;
        self.span2.check(self.tokens.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub max_distance: usize,
    pub buckets: usize,
    pub causal_feature: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            max_distance: 20,
            buckets: 4,
            causal_feature: true,
        }
    }
}

/// Proxy features: shared lemma, clipped token distance, event order,
/// bucketed causal distance (one-hot) and an out-of-space flag.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    space: Option<Arc<CausalSpaceModel>>,
    edges: Vec<f64>,
}

impl FeatureExtractor {
    pub fn new(cfg: FeatureConfig, space: Option<Arc<CausalSpaceModel>>) -> Self {
        FeatureExtractor {
            cfg,
            space,
            edges: Vec::new(),
        }
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn bucket_edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn with_edges(mut self, edges: Vec<f64>) -> Self {
        self.edges = edges;
        self
    }

    pub fn dim(&self) -> usize {
        3 + self.cfg.buckets + 1
    }

    fn distance(&self, a: &str, b: &str) -> Option<f64> {
        if !self.cfg.causal_feature {
            return None;
        }
        let space = self.space.as_ref()?;
        causal_distance(space, a, b)
            .ok()
            .or_else(|| causal_distance(space, b, a).ok())
    }

    /// Quantile bucket edges over the causal distances of `data`.
    pub fn fit(&mut self, data: &[PairExample]) {
        let mut ds: Vec<f64> = data
            .iter()
            .filter_map(|p| self.distance(&p.lemma1, &p.lemma2))
            .collect();
        self.edges.clear();
        if ds.is_empty() || self.cfg.buckets < 2 {
            return;
        }
        ds.sort_by(f64::total_cmp);
        for q in 1..self.cfg.buckets {
            let idx = (q * ds.len() / self.cfg.buckets).min(ds.len() - 1);
            self.edges.push(ds[idx]);
        }
    }

    pub fn extract(&self, ex: &PairExample) -> Vec<f64> {
        let mut f = vec![0.0; self.dim()];
        f[0] = (ex.lemma1 == ex.lemma2) as u8 as f64;
        let dist = ex.span1.start.abs_diff(ex.span2.start).min(self.cfg.max_distance);
        f[1] = dist as f64 / self.cfg.max_distance.max(1) as f64;
        f[2] = (ex.span1.start < ex.span2.start) as u8 as f64;
        match self.distance(&ex.lemma1, &ex.lemma2) {
            Some(d) if self.cfg.buckets > 0 => {
                let b = self.edges.iter().filter(|&&e| e <= d).count();
                f[3 + b.min(self.cfg.buckets - 1)] = 1.0;
            }
            Some(_) => {}
            None => {
                if self.cfg.causal_feature {
                    f[3 + self.cfg.buckets] = 1.0;
                }
            }
        }
        f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentifierConfig {
    pub encoder: EncoderConfig,
    pub hidden: usize,
    pub features: FeatureConfig,
}

impl Default for IdentifierConfig {
    fn default() -> Self {
        IdentifierConfig {
            encoder: EncoderConfig::default(),
            hidden: 32,
            features: FeatureConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct HeadSlots {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentifierModel {
    cfg: IdentifierConfig,
    vocab: Arc<Vocab>,
    params: ParamSet,
    enc: EncoderSlots,
    head: HeadSlots,
    features: FeatureExtractor,
    seed: u64,
}

/// Predicted label and its probability; a 0.5 tie predicts non-causal.
pub fn predicted_label(probs: [f64; 2]) -> (RelationLabel, f64) {
    if probs[0] > probs[1] {
        (RelationLabel::Causal, probs[0])
    } else {
        (RelationLabel::NonCausal, probs[1])
    }
}

impl IdentifierModel {
    pub fn new(
        cfg: IdentifierConfig,
        vocab: Arc<Vocab>,
        features: FeatureExtractor,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let enc = EncoderSlots::register(&mut params, &cfg.encoder, vocab.len(), &mut rng);
        let input = 2 * cfg.encoder.dim + features.dim();
        let a1 = (6.0 / (input + cfg.hidden) as f64).sqrt();
        let a2 = (6.0 / (cfg.hidden + 2) as f64).sqrt();
        let head = HeadSlots {
            w1: params.add_uniform("head.w1", input, cfg.hidden, a1, &mut rng),
            b1: params.add_zeros("head.b1", 1, cfg.hidden),
            w2: params.add_uniform("head.w2", cfg.hidden, 2, a2, &mut rng),
            b2: params.add_zeros("head.b2", 1, 2),
        };
        IdentifierModel {
            cfg,
            vocab,
            params,
            enc,
            head,
            features,
            seed,
        }
    }

    pub fn config(&self) -> &IdentifierConfig {
        &self.cfg
    }

    pub fn features(&self) -> &FeatureExtractor {
        &self.features
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn vocab_arc(&self) -> &Arc<Vocab> {
        &self.vocab
    }

    pub fn checksum(&self) -> String {
        self.params.checksum()
    }

    /// Sets the output layer to zero so every prediction is (0.5, 0.5).
    pub fn zero_head(&mut self) {
        for s in [self.head.w2, self.head.b2] {
            self.params.get_mut(s).data.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Exchanges the two output logits.
    pub fn swap_outputs(&mut self) {
        for s in [self.head.w2, self.head.b2] {
            for row in self.params.get_mut(s).data.chunks_exact_mut(2) {
                row.swap(0, 1);
            }
        }
    }

    /// `1×2` log-probability node, column 0 = causal.
    pub fn forward(&self, tape: &mut Tape, ex: &PairExample) -> NodeId {
        let ids = self.vocab.encode(&ex.tokens);
        let h = self.enc.forward(tape, &ids);
        let m1 = tape.mean_rows(h, ex.span1.start, ex.span1.end);
        let m2 = tape.mean_rows(h, ex.span2.start, ex.span2.end);
        let f = tape.constant(Matrix::row_vector(self.features.extract(ex)));
        let x = tape.concat_cols(&[m1, m2, f]);
        let (w1, b1, w2, b2) = (
            tape.param(self.head.w1),
            tape.param(self.head.b1),
            tape.param(self.head.w2),
            tape.param(self.head.b2),
        );
        let z = tape.matmul(x, w1);
        let z = tape.add_row(z, b1);
        let z = tape.tanh(z);
        let logits = tape.matmul(z, w2);
        let logits = tape.add_row(logits, b2);
        tape.log_softmax_rows(logits)
    }

    /// `[p(causal), p(non-causal)]`.
    pub fn predict(&self, ex: &PairExample) -> Result<[f64; 2]> {
        ex.check()?;
        let mut tape = Tape::new(&self.params);
        let lp = self.forward(&mut tape, ex);
        let v = tape.value(lp);
        Ok([v.at(0, 0).exp(), v.at(0, 1).exp()])
    }

    /// Mean cross-entropy over `batch` and its gradient.
    pub fn loss_and_grads(&self, batch: &[&PairExample]) -> (f64, Grads) {
        let w = -1.0 / batch.len().max(1) as f64;
        self.weighted_log_likelihood(
            &batch.iter().map(|e| (*e, e.label, w)).collect::<Vec<_>>(),
            false,
        )
        .expect("validated batch")
    }

    /// `Σ wᵢ·log p(labelᵢ | exᵢ)` (or `Σ wᵢ·p(labelᵢ | exᵢ)` when
    /// `probability` is set) and its gradient.
    pub fn weighted_log_likelihood(
        &self,
        items: &[(&PairExample, RelationLabel, f64)],
        probability: bool,
    ) -> Result<(f64, Grads)> {
        let mut grads = Grads::new(&self.params);
        let mut total = 0.0;
        for &(ex, label, w) in items {
            ex.check()?;
            let mut tape = Tape::new(&self.params);
            let lp = self.forward(&mut tape, ex);
            let mut term = tape.pick(lp, 0, label.index());
            if probability {
                term = tape.exp(term);
            }
            let obj = tape.weighted_sum(&[(term, w)]);
            total += tape.value(obj).scalar();
            if w != 0.0 {
                grads.add_scaled(&tape.backward(obj), 1.0);
            }
        }
        Ok((total, grads))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Checkpoint {
            header: CheckpointHeader {
                kind: "identifier".into(),
                config: serde_json::to_value(&self.cfg)?,
                vocab: self.vocab.tokens().to_vec(),
                vocab_hash: self.vocab.hash(),
                seed: self.seed,
                tensors: self.params.tensor_meta(),
                extra: serde_json::json!({ "bucket_edges": self.features.edges }),
            },
            data: self.params.iter().map(|p| p.data.clone()).collect(),
        }
        .save(path)
    }

    /// Loads a checkpoint; `space` supplies the causal-distance feature.
    pub fn load(path: &Path, space: Option<Arc<CausalSpaceModel>>) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        if ck.header.kind != "identifier" {
            return Err(Error::Checkpoint(format!(
                "{}: expected an identifier checkpoint, found {}",
                path.display(),
                ck.header.kind
            )));
        }
        let cfg: IdentifierConfig = serde_json::from_value(ck.header.config.clone())?;
        let vocab = Arc::new(Vocab::from_tokens(ck.header.vocab.clone())?);
        if vocab.hash() != ck.header.vocab_hash {
            return Err(Error::Checkpoint("vocabulary hash mismatch".into()));
        }
        let edges: Vec<f64> = serde_json::from_value(
            ck.header.extra.get("bucket_edges").cloned().unwrap_or_default(),
        )
        .unwrap_or_default();
        let features = FeatureExtractor::new(cfg.features.clone(), space).with_edges(edges);
        let mut model = IdentifierModel::new(cfg, vocab, features, ck.header.seed);
        model.params.load_values(&ck.header.tensors, ck.data)?;
        Ok(model)
    }
}

impl EncoderBackend for IdentifierModel {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn dim(&self) -> usize {
        self.cfg.encoder.dim
    }

    fn contextual(&self, ids: &[usize]) -> Matrix {
        if ids.is_empty() {
            return Matrix::zeros(0, self.cfg.encoder.dim);
        }
        let mut tape = Tape::new(&self.params);
        let h = self.enc.forward(&mut tape, ids);
        tape.value(h).clone()
    }
}

/// Distribution over {causal, non-causal} for two event spans of a sentence.
pub fn identify(
    model: &IdentifierModel,
    sentence: &AnnotatedExample,
    span1: Span,
    span2: Span,
) -> Result<[f64; 2]> {
    for s in [span1, span2] {
        s.check(sentence.tokens.len())
            .map_err(|_| Error::validation(&sentence.id, format!("span {:?} out of bounds", s)))?;
    }
    model.predict(&PairExample {
        id: sentence.id.clone(),
        tokens: sentence.tokens.clone(),
        span1,
        span2,
        lemma1: sentence.lemma_at(span1),
        lemma2: sentence.lemma_at(span2),
        label: RelationLabel::NonCausal,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub neg_rate: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            lr: 1e-3,
            batch_size: 16,
            neg_rate: 0.5,
            seed: 13,
            optimizer: OptimizerKind::Adam,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_losses: Vec<f64>,
    pub positives: usize,
    pub sampled_negatives: Vec<usize>,
}

/// Number of negatives kept per epoch for `n` available.
pub fn negatives_kept(n: usize, rate: f64) -> usize {
    if rate >= 1.0 {
        n
    } else {
        ((rate.max(0.0) * n as f64) + 1e-9).floor() as usize
    }
}

/// Cross-entropy training with per-epoch negative down-sampling.
pub fn pretrain_identifier(
    model: &mut IdentifierModel,
    data: &[PairExample],
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    if data.is_empty() {
        return Err(Error::Config("identifier training data is empty".into()));
    }
    for ex in data {
        ex.check().map_err(|e| Error::validation(&ex.id, e.to_string()))?;
    }
    let pos: Vec<&PairExample> = data.iter().filter(|e| e.label.is_causal()).collect();
    let neg: Vec<&PairExample> = data.iter().filter(|e| !e.label.is_causal()).collect();
    if pos.is_empty() || neg.is_empty() {
        log::warn!(
            "identifier training data has a single class ({} causal, {} non-causal)",
            pos.len(),
            neg.len()
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer, &model.params);
    let mut log = TrainLog {
        positives: pos.len(),
        ..Default::default()
    };
    let bs = cfg.batch_size.max(1);
    for _ in 0..cfg.epochs {
        let mut negs = neg.clone();
        negs.shuffle(&mut rng);
        negs.truncate(negatives_kept(neg.len(), cfg.neg_rate));
        log.sampled_negatives.push(negs.len());
        let mut epoch: Vec<&PairExample> = pos.iter().copied().chain(negs).collect();
        epoch.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in epoch.chunks(bs) {
            let (loss, grads) = model.loss_and_grads(batch);
            total += loss * batch.len() as f64;
            opt.step(&mut model.params, &grads, cfg.lr);
        }
        log.epoch_losses.push(total / epoch.len().max(1) as f64);
    }
    Ok(log)
}
