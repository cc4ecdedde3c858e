//! Entity candidate pools and similarity-based entity assignment.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedExample, Span};
use crate::error::{Error, Result};
use crate::knowledge::{load_jsonl, CandidatePair};
use crate::models::{cosine, embed_entity_in_context, EncoderBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntitySource {
    AnnotatedCorpus,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityCandidate {
    pub tokens: Vec<String>,
    #[serde(rename = "type")]
    pub entity_type: String,
    #[serde(default = "external")]
    pub source: EntitySource,
}

fn external() -> EntitySource {
    EntitySource::External
}

impl EntityCandidate {
    pub fn surface(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Deduplicated, sorted pool of typed entity surfaces.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntityCandidateSet {
    entries: Vec<EntityCandidate>,
}

impl EntityCandidateSet {
    pub fn new(entries: impl IntoIterator<Item = EntityCandidate>) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for e in entries {
            if e.entity_type.is_empty() {
                return Err(Error::Structure(format!(
                    "entity candidate {:?} has an empty type",
                    e.surface()
                )));
            }
            if e.tokens.is_empty() {
                return Err(Error::Structure("entity candidate with no tokens".into()));
            }
            // First source wins when a surface appears in both pools.
            seen.entry((e.entity_type.clone(), e.tokens.clone()))
                .or_insert(e.source);
        }
        Ok(EntityCandidateSet {
            entries: seen
                .into_iter()
                .map(|((entity_type, tokens), source)| EntityCandidate {
                    tokens,
                    entity_type,
                    source,
                })
                .collect(),
        })
    }

    /// Every entity mention of an annotated corpus.
    pub fn from_corpus(corpus: &[AnnotatedExample]) -> Self {
        let entries = corpus.iter().flat_map(|ex| {
            ex.entities.iter().map(move |m| EntityCandidate {
                tokens: ex.tokens[m.span.start..m.span.end].to_vec(),
                entity_type: m.entity_type.clone(),
                source: EntitySource::AnnotatedCorpus,
            })
        });
        Self::new(entries).expect("validated corpus entities")
    }

    /// JSONL rows `{"tokens": [..], "type": ..}`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let rows: Vec<EntityCandidate> = load_jsonl(path)?;
        Self::new(rows)
    }

    pub fn merge(&self, other: &EntityCandidateSet) -> Self {
        Self::new(self.entries.iter().chain(&other.entries).cloned()).expect("valid entries")
    }

    pub fn entries(&self) -> &[EntityCandidate] {
        &self.entries
    }

    pub fn of_type<'a>(&'a self, t: &'a str) -> impl Iterator<Item = &'a EntityCandidate> + 'a {
        self.entries.iter().filter(move |e| e.entity_type == t)
    }

    pub fn types(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.entity_type.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityAssignment {
    pub tokens: Vec<String>,
    pub entity_type: String,
    pub similarity: f64,
    /// True when no same-type alternative existed.
    pub fallback: bool,
}

/// `tokens` with `span` replaced by `insert`; returns the new span.
pub fn splice(tokens: &[String], span: Span, insert: &[String]) -> (Vec<String>, Span) {
    let mut out = Vec::with_capacity(tokens.len() + insert.len());
    out.extend_from_slice(&tokens[..span.start]);
    out.extend_from_slice(insert);
    out.extend_from_slice(&tokens[span.end..]);
    (out, Span::new(span.start, span.start + insert.len()))
}

/// Similarity of every same-type candidate placed at the entity's position,
/// in candidate order.
pub fn candidate_similarities(
    original: &AnnotatedExample,
    span: Span,
    candidates: &[&EntityCandidate],
    backend: &dyn EncoderBackend,
) -> Result<Vec<f64>> {
    let reference = embed_entity_in_context(backend, &original.tokens, span)?;
    candidates
        .iter()
        .map(|c| {
            let (toks, s) = splice(&original.tokens, span, &c.tokens);
            let v = embed_entity_in_context(backend, &toks, s)?;
            Ok(cosine(&reference, &v).unwrap_or_else(|| {
                log::warn!("zero-norm entity embedding for {:?}", c.surface());
                0.0
            }))
        })
        .collect()
}

/// For each entity of `original`, the most similar same-type candidate
/// (the original surface is excluded when alternatives exist).
pub fn assign_entities(
    pair: &CandidatePair,
    original: &AnnotatedExample,
    candidates: &EntityCandidateSet,
    backend: &dyn EncoderBackend,
) -> Result<BTreeMap<String, EntityAssignment>> {
    let mut out = BTreeMap::new();
    for m in &original.entities {
        let own = &original.tokens[m.span.start..m.span.end];
        let pool: Vec<&EntityCandidate> = candidates
            .of_type(&m.entity_type)
            .filter(|c| c.tokens != own)
            .collect();
        if pool.is_empty() {
            log::info!(
                "no alternative {} entity for {:?} in {} ({} -> {}); keeping the original",
                m.entity_type,
                own.join(" "),
                original.id,
                pair.e1,
                pair.e2
            );
            out.insert(
                m.id.clone(),
                EntityAssignment {
                    tokens: own.to_vec(),
                    entity_type: m.entity_type.clone(),
                    similarity: 1.0,
                    fallback: true,
                },
            );
            continue;
        }
        let sims = candidate_similarities(original, m.span, &pool, backend)?;
        // Pool is sorted by tokens, so the first strict maximum is the
        // lexicographically smallest among ties.
        let mut best = 0;
        for (i, &s) in sims.iter().enumerate() {
            if s > sims[best] {
                best = i;
            }
        }
        out.insert(
            m.id.clone(),
            EntityAssignment {
                tokens: pool[best].tokens.clone(),
                entity_type: m.entity_type.clone(),
                similarity: sims[best],
                fallback: false,
            },
        );
    }
    Ok(out)
}
