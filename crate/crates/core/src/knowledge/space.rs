//! Translation-style causal embedding space trained with a margin-ranking
//! hinge objective.
//!
//! `d(a, b) = ‖v(a) + r − v(b)‖₂`, where `r` is a single learned causal
//! translation. Training minimises `Σ [margin + d(causal) − d(non-causal)]₊`
//! and re-projects every event vector onto the unit sphere after each epoch.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge::CandidatePair;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceConfig {
    pub dims: usize,
    pub margin: f64,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        SpaceConfig {
            dims: 50,
            margin: 1.0,
            epochs: 100,
            lr: 0.05,
            seed: 13,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalSpaceModel {
    pub dims: usize,
    pub margin: f64,
    pub lemmas: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
    pub r_causal: Vec<f64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

/// Gradient of the hinge objective with respect to every event vector and the
/// translation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceGradient {
    pub vectors: Vec<Vec<f64>>,
    pub r_causal: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

impl CausalSpaceModel {
    pub fn new(
        dims: usize,
        margin: f64,
        lemmas: Vec<String>,
        vectors: Vec<Vec<f64>>,
        r_causal: Vec<f64>,
    ) -> Result<Self> {
        if vectors.len() != lemmas.len()
            || r_causal.len() != dims
            || vectors.iter().any(|v| v.len() != dims)
        {
            return Err(Error::Config("causal space shape mismatch".into()));
        }
        let mut m = CausalSpaceModel {
            dims,
            margin,
            lemmas,
            vectors,
            r_causal,
            index: HashMap::new(),
        };
        m.reindex();
        Ok(m)
    }

    fn reindex(&mut self) {
        self.index = self
            .lemmas
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
    }

    pub fn lookup(&self, lemma: &str) -> Result<usize> {
        self.index
            .get(lemma)
            .copied()
            .ok_or_else(|| Error::OutOfVocabulary(lemma.to_string()))
    }

    pub fn contains(&self, lemma: &str) -> bool {
        self.index.contains_key(lemma)
    }

    pub fn vector(&self, lemma: &str) -> Result<&[f64]> {
        Ok(&self.vectors[self.lookup(lemma)?])
    }

    /// `v(a) + r − v(b)` by vocabulary index.
    fn residual(&self, a: usize, b: usize) -> Vec<f64> {
        (0..self.dims)
            .map(|k| self.vectors[a][k] + self.r_causal[k] - self.vectors[b][k])
            .collect()
    }

    fn distance_idx(&self, a: usize, b: usize) -> f64 {
        norm(&self.residual(a, b))
    }

    /// Mean hinge loss over every (causal, non-causal) combination.
    pub fn hinge_objective(&self, causal: &[(usize, usize)], noncausal: &[(usize, usize)]) -> f64 {
        if causal.is_empty() || noncausal.is_empty() {
            return 0.0;
        }
        let dc: Vec<f64> = causal.iter().map(|&(a, b)| self.distance_idx(a, b)).collect();
        let dn: Vec<f64> = noncausal.iter().map(|&(a, b)| self.distance_idx(a, b)).collect();
        let mut total = 0.0;
        for c in &dc {
            for n in &dn {
                total += (self.margin + c - n).max(0.0);
            }
        }
        total / (dc.len() * dn.len()) as f64
    }

    /// Analytic gradient of [`hinge_objective`](Self::hinge_objective).
    pub fn hinge_gradient(
        &self,
        causal: &[(usize, usize)],
        noncausal: &[(usize, usize)],
    ) -> SpaceGradient {
        let mut grad = SpaceGradient {
            vectors: vec![vec![0.0; self.dims]; self.lemmas.len()],
            r_causal: vec![0.0; self.dims],
        };
        if causal.is_empty() || noncausal.is_empty() {
            return grad;
        }
        let scale = 1.0 / (causal.len() * noncausal.len()) as f64;
        let unit = |a: usize, b: usize| {
            let res = self.residual(a, b);
            let d = norm(&res);
            let u: Vec<f64> = if d > 0.0 {
                res.iter().map(|x| x / d).collect()
            } else {
                vec![0.0; self.dims]
            };
            (d, u)
        };
        let cu: Vec<_> = causal.iter().map(|&(a, b)| unit(a, b)).collect();
        let nu: Vec<_> = noncausal.iter().map(|&(a, b)| unit(a, b)).collect();
        for (ci, &(ca, cb)) in causal.iter().enumerate() {
            for (ni, &(na, nb)) in noncausal.iter().enumerate() {
                if self.margin + cu[ci].0 - nu[ni].0 <= 0.0 {
                    continue;
                }
                for k in 0..self.dims {
                    let gc = cu[ci].1[k] * scale;
                    let gn = nu[ni].1[k] * scale;
                    grad.vectors[ca][k] += gc;
                    grad.vectors[cb][k] -= gc;
                    grad.r_causal[k] += gc;
                    grad.vectors[na][k] -= gn;
                    grad.vectors[nb][k] += gn;
                    grad.r_causal[k] -= gn;
                }
            }
        }
        grad
    }

    /// Converts lemma pairs to vocabulary index pairs; fails on the first OOV.
    pub fn index_pairs(&self, pairs: &[CandidatePair]) -> Result<Vec<(usize, usize)>> {
        pairs
            .iter()
            .map(|p| Ok((self.lookup(&p.e1)?, self.lookup(&p.e2)?)))
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: CausalSpaceModel = serde_json::from_str(&text)?;
        m.reindex();
        Ok(m)
    }
}

/// `‖v(e1) + r − v(e2)‖₂`.
pub fn causal_distance(model: &CausalSpaceModel, e1: &str, e2: &str) -> Result<f64> {
    let (a, b) = (model.lookup(e1)?, model.lookup(e2)?);
    Ok(model.distance_idx(a, b))
}

/// Seeded initialization: unit-norm event vectors, small translation.
pub fn init_causal_space(lemmas: Vec<String>, cfg: &SpaceConfig) -> Result<CausalSpaceModel> {
    if cfg.dims < 2 {
        return Err(Error::Config(format!("dims must be at least 2, got {}", cfg.dims)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vectors = lemmas
        .iter()
        .map(|_| {
            let mut v: Vec<f64> = (0..cfg.dims).map(|_| rng.gen_range(-1.0..1.0)).collect();
            normalize(&mut v);
            v
        })
        .collect();
    let r_causal = (0..cfg.dims).map(|_| rng.gen_range(-0.1..0.1)).collect();
    CausalSpaceModel::new(cfg.dims, cfg.margin, lemmas, vectors, r_causal)
}

/// Trains the space with plain SGD; each epoch walks the causal pairs in a
/// seeded shuffled order, pairing each with a non-causal pair round-robin.
pub fn train_causal_space(
    causal: &[CandidatePair],
    noncausal: &[CandidatePair],
    cfg: &SpaceConfig,
) -> Result<CausalSpaceModel> {
    if causal.is_empty() || noncausal.is_empty() {
        return Err(Error::Config(
            "causal space training needs both causal and non-causal pairs".into(),
        ));
    }
    let lemmas: Vec<String> = causal
        .iter()
        .chain(noncausal)
        .flat_map(|p| [p.e1.clone(), p.e2.clone()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut model = init_causal_space(lemmas, cfg)?;
    let pos = model.index_pairs(causal)?;
    let neg = model.index_pairs(noncausal)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..pos.len()).collect();
    let steps = pos.len().max(neg.len());
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for i in 0..steps {
            let (ca, cb) = pos[order[i % pos.len()]];
            let (na, nb) = neg[(i + epoch) % neg.len()];
            sgd_step(&mut model, (ca, cb), (na, nb), cfg.lr);
        }
        for v in model.vectors.iter_mut() {
            normalize(v);
        }
    }
    Ok(model)
}

fn sgd_step(model: &mut CausalSpaceModel, c: (usize, usize), n: (usize, usize), lr: f64) {
    let rc = model.residual(c.0, c.1);
    let rn = model.residual(n.0, n.1);
    let (dc, dn) = (norm(&rc), norm(&rn));
    if model.margin + dc - dn <= 0.0 {
        return;
    }
    for k in 0..model.dims {
        let gc = if dc > 0.0 { rc[k] / dc } else { 0.0 };
        let gn = if dn > 0.0 { rn[k] / dn } else { 0.0 };
        model.vectors[c.0][k] -= lr * gc;
        model.vectors[c.1][k] += lr * gc;
        model.vectors[n.0][k] += lr * gn;
        model.vectors[n.1][k] -= lr * gn;
        model.r_causal[k] -= lr * (gc - gn);
    }
}
