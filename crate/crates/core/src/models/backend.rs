//! Encoder backend interface and the tiny self-attention reference backend.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Span;
use crate::error::{Error, Result};
use crate::models::params::{Grads, ParamSet};
use crate::models::tape::{NodeId, Tape};
use crate::models::tensor::{softmax, Matrix};
use crate::models::vocab::{Vocab, SPECIALS};

/// Anything that maps token ids to contextual vectors.
pub trait EncoderBackend: Send + Sync {
    fn vocab(&self) -> &Vocab;
    fn dim(&self) -> usize;
    /// `L×D` contextual vectors for a token-id sequence.
    fn contextual(&self, ids: &[usize]) -> Matrix;

    fn pooled(&self, ids: &[usize]) -> Vec<f64> {
        if ids.is_empty() {
            return vec![0.0; self.dim()];
        }
        self.contextual(ids).mean_rows(0, ids.len())
    }
}

/// Backends that also predict a distribution over the vocabulary at every
/// position.
pub trait MaskFiller: EncoderBackend {
    /// `L×V` row-stochastic matrix; special tokens get probability 0.
    fn fill_distributions(&self, ids: &[usize]) -> Matrix;
}

/// Pooled sentence vector.
pub fn encode_sentence<S: AsRef<str>>(backend: &dyn EncoderBackend, tokens: &[S]) -> Vec<f64> {
    backend.pooled(&backend.vocab().encode(tokens))
}

/// Mean contextual vector over `span` of `tokens`.
pub fn embed_entity_in_context<S: AsRef<str>>(
    backend: &dyn EncoderBackend,
    tokens: &[S],
    span: Span,
) -> Result<Vec<f64>> {
    if span.is_empty() {
        return Err(Error::Span {
            start: span.start,
            end: span.end,
            len: tokens.len(),
        });
    }
    span.check(tokens.len())?;
    let h = backend.contextual(&backend.vocab().encode(tokens));
    Ok(h.mean_rows(span.start, span.end))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub dim: usize,
    pub layers: usize,
    pub max_len: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            dim: 32,
            layers: 2,
            max_len: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LayerSlots {
    q: usize,
    k: usize,
    v: usize,
    o: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

/// Slot layout of the encoder inside a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSlots {
    tok: usize,
    pos: usize,
    layers: Vec<LayerSlots>,
    dim: usize,
    max_len: usize,
}

impl EncoderSlots {
    pub fn register(
        ps: &mut ParamSet,
        cfg: &EncoderConfig,
        vocab_len: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let d = cfg.dim;
        let a = (1.0 / d as f64).sqrt();
        let tok = ps.add_uniform("enc.tok", vocab_len, d, 0.5, rng);
        let pos = ps.add_uniform("enc.pos", cfg.max_len, d, 0.1, rng);
        let layers = (0..cfg.layers)
            .map(|l| LayerSlots {
                q: ps.add_uniform(&format!("enc.{l}.q"), d, d, a, rng),
                k: ps.add_uniform(&format!("enc.{l}.k"), d, d, a, rng),
                v: ps.add_uniform(&format!("enc.{l}.v"), d, d, a, rng),
                o: ps.add_uniform(&format!("enc.{l}.o"), d, d, 0.5 * a, rng),
                w1: ps.add_uniform(&format!("enc.{l}.w1"), d, d, a, rng),
                b1: ps.add_zeros(&format!("enc.{l}.b1"), 1, d),
                w2: ps.add_uniform(&format!("enc.{l}.w2"), d, d, 0.5 * a, rng),
                b2: ps.add_zeros(&format!("enc.{l}.b2"), 1, d),
            })
            .collect();
        EncoderSlots {
            tok,
            pos,
            layers,
            dim: d,
            max_len: cfg.max_len,
        }
    }

    pub fn slots(&self) -> Vec<usize> {
        let mut s = vec![self.tok, self.pos];
        for l in &self.layers {
            s.extend([l.q, l.k, l.v, l.o, l.w1, l.b1, l.w2, l.b2]);
        }
        s
    }

    /// Records the encoder on `tape`; returns the `L×D` output node.
    pub fn forward(&self, tape: &mut Tape, ids: &[usize]) -> NodeId {
        let positions: Vec<usize> = (0..ids.len()).map(|i| i.min(self.max_len - 1)).collect();
        let te = tape.embed(self.tok, ids);
        let pe = tape.embed(self.pos, &positions);
        let mut x = tape.add(te, pe);
        let inv = 1.0 / (self.dim as f64).sqrt();
        for l in &self.layers {
            let (wq, wk, wv, wo) = (tape.param(l.q), tape.param(l.k), tape.param(l.v), tape.param(l.o));
            let q = tape.matmul(x, wq);
            let k = tape.matmul(x, wk);
            let v = tape.matmul(x, wv);
            let scores = tape.matmul_t(q, k);
            let scores = tape.scale(scores, inv);
            let att = tape.softmax_rows(scores);
            let ctx = tape.matmul(att, v);
            let ctx = tape.matmul(ctx, wo);
            let h = tape.add(x, ctx);
            let (w1, b1, w2, b2) = (tape.param(l.w1), tape.param(l.b1), tape.param(l.w2), tape.param(l.b2));
            let f = tape.matmul(h, w1);
            let f = tape.add_row(f, b1);
            let f = tape.tanh(f);
            let f = tape.matmul(f, w2);
            let f = tape.add_row(f, b2);
            x = tape.add(h, f);
        }
        x
    }
}

/// Reference mask-fill backend: encoder plus a vocabulary projection.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyBackend {
    cfg: EncoderConfig,
    vocab: Arc<Vocab>,
    params: ParamSet,
    enc: EncoderSlots,
    out_w: usize,
    out_b: usize,
    seed: u64,
}

impl TinyBackend {
    pub fn new(cfg: EncoderConfig, vocab: Arc<Vocab>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let enc = EncoderSlots::register(&mut params, &cfg, vocab.len(), &mut rng);
        let a = (1.0 / cfg.dim as f64).sqrt();
        let out_w = params.add_uniform("mlm.w", cfg.dim, vocab.len(), a, &mut rng);
        let out_b = params.add_zeros("mlm.b", 1, vocab.len());
        TinyBackend {
            cfg,
            vocab,
            params,
            enc,
            out_w,
            out_b,
            seed,
        }
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn vocab_arc(&self) -> &Arc<Vocab> {
        &self.vocab
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn encoder_slots(&self) -> Vec<usize> {
        self.enc.slots()
    }

    pub fn checksum(&self) -> String {
        self.params.checksum()
    }

    /// Makes every position predict `id` with probability 1 (to f64
    /// precision), independent of context.
    pub fn force_delta(&mut self, id: usize) {
        self.params.get_mut(self.out_w).data.iter_mut().for_each(|x| *x = 0.0);
        let b = self.params.get_mut(self.out_b);
        b.data.iter_mut().for_each(|x| *x = 0.0);
        b.data[id] = 1.0e4;
    }

    fn special_row(&self) -> Matrix {
        let mut row = vec![0.0; self.vocab.len()];
        row[..SPECIALS.len()].iter_mut().for_each(|x| *x = -1.0e9);
        Matrix::row_vector(row)
    }

    /// `L×V` log-probability node.
    pub fn log_probs(&self, tape: &mut Tape, ids: &[usize]) -> NodeId {
        let h = self.enc.forward(tape, ids);
        let w = tape.param(self.out_w);
        let b = tape.param(self.out_b);
        let logits = tape.matmul(h, w);
        let logits = tape.add_row(logits, b);
        let mask = tape.constant(self.special_row());
        let logits = tape.add_row(logits, mask);
        tape.log_softmax_rows(logits)
    }

    /// Mean masked-token cross-entropy and its gradient.
    pub fn mlm_loss(&self, ids: &[usize], targets: &[(usize, usize)]) -> (f64, Grads) {
        let mut tape = Tape::new(&self.params);
        let lp = self.log_probs(&mut tape, ids);
        let w = -1.0 / targets.len().max(1) as f64;
        let terms: Vec<(NodeId, f64)> = targets
            .iter()
            .map(|&(pos, tok)| (tape.pick(lp, pos, tok), w))
            .collect();
        let loss = tape.weighted_sum(&terms);
        (tape.value(loss).scalar(), tape.backward(loss))
    }
}

impl EncoderBackend for TinyBackend {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn dim(&self) -> usize {
        self.cfg.dim
    }

    fn contextual(&self, ids: &[usize]) -> Matrix {
        if ids.is_empty() {
            return Matrix::zeros(0, self.cfg.dim);
        }
        let mut tape = Tape::new(&self.params);
        let h = self.enc.forward(&mut tape, ids);
        tape.value(h).clone()
    }
}

impl MaskFiller for TinyBackend {
    fn fill_distributions(&self, ids: &[usize]) -> Matrix {
        if ids.is_empty() {
            return Matrix::zeros(0, self.vocab.len());
        }
        let mut tape = Tape::new(&self.params);
        let lp = self.log_probs(&mut tape, ids);
        let lp = tape.value(lp);
        let mut out = Matrix::zeros(lp.rows, lp.cols);
        for r in 0..lp.rows {
            out.row_mut(r).copy_from_slice(&softmax(lp.row(r)));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn backend() -> TinyBackend {
        let vocab = Arc::new(Vocab::build(["a", "b", "c", "d", "e"]));
        TinyBackend::new(
            EncoderConfig {
                dim: 8,
                layers: 2,
                max_len: 8,
            },
            vocab,
            3,
        )
    }

    #[test]
    fn fill_distribution_is_normalized_and_skips_specials() {
        let b = backend();
        let ids = b.vocab().encode(&["a", "[MASK]", "c"]);
        let d = b.fill_distributions(&ids);
        for r in 0..d.rows {
            let s: f64 = d.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(d.row(r)[..SPECIALS.len()].iter().all(|&p| p == 0.0));
        }
    }

    #[test]
    fn entity_embedding_is_span_mean() {
        let b = backend();
        let toks = ["a", "b", "c", "d"];
        let h = b.contextual(&b.vocab().encode(&toks));
        let e = embed_entity_in_context(&b, &toks, Span::new(1, 4)).unwrap();
        for c in 0..8 {
            let m = (h.at(1, c) + h.at(2, c) + h.at(3, c)) / 3.0;
            assert!((e[c] - m).abs() < 1e-12);
        }
        let single = embed_entity_in_context(&b, &toks, Span::new(2, 3)).unwrap();
        assert_eq!(single, h.row(2).to_vec());
        assert!(embed_entity_in_context(&b, &toks, Span::new(2, 2)).is_err());
    }

    #[test]
    fn encode_sentence_is_deterministic_with_configured_dim() {
        let b = backend();
        let v1 = encode_sentence(&b, &["a", "b"]);
        assert_eq!(v1, encode_sentence(&b, &["a", "b"]));
        assert_eq!(v1.len(), 8);
    }

    /// Central difference on f32 storage, using the realized perturbation.
    fn finite_difference(b: &mut TinyBackend, slot: usize, i: usize, f: &dyn Fn(&TinyBackend) -> f64) -> f64 {
        let orig = b.params().get(slot).data[i];
        let eps = 1e-3f32;
        b.params_mut().get_mut(slot).data[i] = orig + eps;
        let up = b.params().get(slot).data[i];
        let lp = f(b);
        b.params_mut().get_mut(slot).data[i] = orig - eps;
        let down = b.params().get(slot).data[i];
        let lm = f(b);
        b.params_mut().get_mut(slot).data[i] = orig;
        (lp - lm) / (up as f64 - down as f64)
    }

    #[test]
    fn mlm_gradient_matches_finite_differences() {
        let mut b = backend();
        let ids = b.vocab().encode(&["a", "[MASK]", "c", "[MASK]"]);
        let targets = vec![(1, b.vocab().id("b")), (3, b.vocab().id("e"))];
        let (_, grads) = b.mlm_loss(&ids, &targets);
        let loss = |m: &TinyBackend| m.mlm_loss(&ids, &targets).0;
        let tok = b.vocab().id("a");
        let probes = [
            (0, tok * 8 + 2),
            (2, 5),
            (4, 9),
            (b.params().len() - 2, 3 * 9 + 6),
            (b.params().len() - 1, 7),
        ];
        for (slot, i) in probes {
            let analytic = grads.get(slot).unwrap().data[i];
            let numeric = finite_difference(&mut b, slot, i, &loss);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            assert!(rel < 1e-4, "slot {slot}[{i}]: {analytic} vs {numeric}");
        }
    }

    #[test]
    fn forced_delta_puts_all_mass_on_token() {
        let mut b = backend();
        let w = b.vocab().id("d");
        b.force_delta(w);
        let d = b.fill_distributions(&b.vocab().encode(&["[MASK]", "a"]));
        assert_eq!(d.at(0, w), 1.0);
    }
}
