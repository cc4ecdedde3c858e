//! Candidate event pairs and lexical expansion.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{enumerate_pairs, AnnotatedExample, RelationLabel};
use crate::error::{Error, Result};
use crate::knowledge::LexiconAdapter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Annotated,
    Connective,
    LexicalExpansion,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Annotated => "annotated",
            Provenance::Connective => "connective",
            Provenance::LexicalExpansion => "lexical-expansion",
        }
    }
}

/// An ordered event-lemma pair with a provisional label. `origin_id` and
/// `origin_events` locate the sentence (and the two event mentions in it) the
/// pair was drawn from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CandidatePair {
    pub e1: String,
    pub e2: String,
    #[serde(rename = "label")]
    pub provisional_label: RelationLabel,
    pub provenance: Provenance,
    pub origin_id: String,
    pub origin_events: (String, String),
}

impl CandidatePair {
    pub fn key(&self) -> (&str, &str) {
        (&self.e1, &self.e2)
    }
}

/// Annotated pairs of a labeled corpus, with lemmas in sentence order.
pub fn annotated_pairs(corpus: &[AnnotatedExample]) -> Vec<CandidatePair> {
    let mut out = Vec::new();
    for ex in corpus {
        for p in enumerate_pairs(ex) {
            let (a, b) = (ex.event(&p.e1).unwrap(), ex.event(&p.e2).unwrap());
            out.push(CandidatePair {
                e1: a.lemma.clone(),
                e2: b.lemma.clone(),
                provisional_label: p.label,
                provenance: Provenance::Annotated,
                origin_id: ex.id.clone(),
                origin_events: (p.e1.clone(), p.e2.clone()),
            });
        }
    }
    out
}

/// Cross product of the two lemmas' expansion groups (each including the lemma
/// itself), minus the original pair. Label and origin are inherited.
pub fn expand_lexical(pair: &CandidatePair, lexicon: &LexiconAdapter) -> Vec<CandidatePair> {
    let group = |lemma: &str| {
        let mut g = lexicon.expansions(lemma);
        g.insert(lemma.to_string());
        g
    };
    let (left, right) = (group(&pair.e1), group(&pair.e2));
    let mut out = BTreeSet::new();
    for a in &left {
        for b in &right {
            if *a == pair.e1 && *b == pair.e2 {
                continue;
            }
            out.insert(CandidatePair {
                e1: a.clone(),
                e2: b.clone(),
                provisional_label: pair.provisional_label,
                provenance: Provenance::LexicalExpansion,
                origin_id: pair.origin_id.clone(),
                origin_events: pair.origin_events.clone(),
            });
        }
    }
    out.into_iter().collect()
}

/// Origin sentences by id.
#[derive(Debug, Clone, Default)]
pub struct OriginIndex {
    by_id: HashMap<String, Arc<AnnotatedExample>>,
}

impl OriginIndex {
    pub fn new<'a>(sets: impl IntoIterator<Item = &'a [AnnotatedExample]>) -> Result<Self> {
        let mut by_id = HashMap::new();
        for set in sets {
            for ex in set {
                if by_id.insert(ex.id.clone(), Arc::new(ex.clone())).is_some() {
                    return Err(Error::validation(&ex.id, "duplicate sentence id across sources"));
                }
            }
        }
        Ok(OriginIndex { by_id })
    }

    pub fn get(&self, id: &str) -> Result<&Arc<AnnotatedExample>> {
        self.by_id
            .get(id)
            .ok_or_else(|| Error::Structure(format!("origin sentence `{id}` not found")))
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}

pub fn save_jsonl<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_jsonl<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
