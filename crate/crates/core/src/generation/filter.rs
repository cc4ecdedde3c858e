//! Sentence completion and PPL/DIS scoring.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedExample, RelationLabel, Span};
use crate::error::{Error, Result};
use crate::generation::Skeleton;
use crate::models::{cosine, encode_sentence, fill_masks, EncoderBackend, GeneratorPair, PairExample};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRef {
    pub e1: String,
    pub e2: String,
    pub label: RelationLabel,
}

/// A completed sentence. `dis` and `score` stay unset until scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedCandidate {
    pub id: String,
    pub pair: PairRef,
    pub tokens: Vec<String>,
    pub fill_positions: Vec<usize>,
    pub fill_probs: Vec<f64>,
    pub ppl: f64,
    pub dis: Option<f64>,
    pub score: Option<f64>,
    pub origin_id: String,
    pub event_spans: [Span; 2],
    #[serde(default)]
    pub entity_spans: Vec<Span>,
}

impl GeneratedCandidate {
    pub fn to_pair_example(&self) -> PairExample {
        PairExample {
            id: self.id.clone(),
            tokens: self.tokens.clone(),
            span1: self.event_spans[0],
            span2: self.event_spans[1],
            lemma1: self.pair.e1.clone(),
            lemma2: self.pair.e2.clone(),
            label: self.pair.label,
        }
    }
}

/// Mean fill probability; 1.0 when nothing was filled.
pub fn ppl(fill_probs: &[f64]) -> f64 {
    if fill_probs.is_empty() {
        1.0
    } else {
        fill_probs.iter().sum::<f64>() / fill_probs.len() as f64
    }
}

pub fn complete_sentence(
    generators: &GeneratorPair,
    skeleton: &Skeleton,
    id: impl Into<String>,
) -> GeneratedCandidate {
    let fill = fill_masks(generators, skeleton.relation, &skeleton.tokens);
    GeneratedCandidate {
        id: id.into(),
        pair: PairRef {
            e1: skeleton.origin.e1.clone(),
            e2: skeleton.origin.e2.clone(),
            label: skeleton.relation,
        },
        ppl: ppl(&fill.probs),
        tokens: fill.tokens,
        fill_positions: fill.positions,
        fill_probs: fill.probs,
        dis: None,
        score: None,
        origin_id: skeleton.origin.origin_id.clone(),
        event_spans: skeleton.event_slots,
        entity_spans: skeleton.entity_slots.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DisMode {
    #[default]
    Similarity,
    OneMinusSimilarity,
}

/// `m` distinct sentences drawn uniformly with `seed` (all of them when
/// fewer exist), in draw order.
pub fn sample_sentences(labeled: &[AnnotatedExample], m: usize, seed: u64) -> Vec<AnnotatedExample> {
    let mut idx: Vec<usize> = (0..labeled.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(m);
    idx.into_iter().map(|i| labeled[i].clone()).collect()
}

/// Mean cosine between `vector` and each sample encoding; zero-norm terms
/// count as 0.
pub fn dis_from_encodings(vector: &[f64], sample: &[Vec<f64>], mode: DisMode) -> f64 {
    if sample.is_empty() {
        return 0.0;
    }
    let sim = sample
        .iter()
        .map(|s| {
            cosine(vector, s).unwrap_or_else(|| {
                log::warn!("zero-norm sentence encoding in DIS; term set to 0");
                0.0
            })
        })
        .sum::<f64>()
        / sample.len() as f64;
    match mode {
        DisMode::Similarity => sim,
        DisMode::OneMinusSimilarity => 1.0 - sim,
    }
}

pub fn dis(
    tokens: &[String],
    sample: &[AnnotatedExample],
    backend: &dyn EncoderBackend,
    mode: DisMode,
) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::Config("DIS sample is empty".into()));
    }
    let enc: Vec<Vec<f64>> = sample
        .iter()
        .map(|s| encode_sentence(backend, &s.tokens))
        .collect();
    Ok(dis_from_encodings(&encode_sentence(backend, tokens), &enc, mode))
}

pub fn score(mu: f64, ppl: f64, dis: f64) -> f64 {
    mu * ppl + (1.0 - mu) * dis
}

/// Score descending, then id ascending.
pub fn score_order(a: &GeneratedCandidate, b: &GeneratedCandidate) -> Ordering {
    let (sa, sb) = (a.score.unwrap_or(f64::NEG_INFINITY), b.score.unwrap_or(f64::NEG_INFINITY));
    sb.total_cmp(&sa).then_with(|| a.id.cmp(&b.id))
}

/// Top ⌊β·N⌋ of already-scored candidates.
pub fn select_top(mut candidates: Vec<GeneratedCandidate>, beta: f64) -> Vec<GeneratedCandidate> {
    let keep = ((beta * candidates.len() as f64) + 1e-9).floor() as usize;
    candidates.sort_by(score_order);
    candidates.truncate(keep);
    candidates
}

/// Fills in `dis` and `score` for every candidate, then keeps the best
/// ⌊β·N⌋.
pub fn score_and_filter(
    candidates: Vec<GeneratedCandidate>,
    mu: f64,
    beta: f64,
    sample: &[AnnotatedExample],
    backend: &dyn EncoderBackend,
    mode: DisMode,
) -> Result<Vec<GeneratedCandidate>> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Config(format!("beta must lie in (0, 1], got {beta}")));
    }
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::Config(format!("mu must lie in [0, 1], got {mu}")));
    }
    if sample.is_empty() {
        return Err(Error::Config("DIS sample is empty".into()));
    }
    let enc: Vec<Vec<f64>> = sample
        .par_iter()
        .map(|s| encode_sentence(backend, &s.tokens))
        .collect();
    let scored: Vec<GeneratedCandidate> = candidates
        .into_par_iter()
        .map(|mut c| {
            let d = dis_from_encodings(&encode_sentence(backend, &c.tokens), &enc, mode);
            c.dis = Some(d);
            c.score = Some(score(mu, c.ppl, d));
            c
        })
        .collect();
    Ok(select_top(scored, beta))
}
