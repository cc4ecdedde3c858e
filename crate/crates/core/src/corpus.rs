//! Annotated sentence records, JSONL ingestion, pair enumeration and
//! topic-level fold planning.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary relation between two events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelationLabel {
    #[serde(rename = "causal")]
    Causal,
    #[serde(rename = "non-causal")]
    NonCausal,
}

impl RelationLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RelationLabel::Causal => "causal",
            RelationLabel::NonCausal => "non-causal",
        }
    }

    pub fn is_causal(self) -> bool {
        self == RelationLabel::Causal
    }

    /// Index into a two-way distribution: 0 = causal, 1 = non-causal.
    pub fn index(self) -> usize {
        match self {
            RelationLabel::Causal => 0,
            RelationLabel::NonCausal => 1,
        }
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "causal" => Ok(RelationLabel::Causal),
            "non-causal" | "noncausal" | "non_causal" => Ok(RelationLabel::NonCausal),
            other => Err(Error::Routing(other.to_string())),
        }
    }
}

/// Half-open token range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn check(&self, len: usize) -> Result<()> {
        if self.is_empty() || self.end > len {
            return Err(Error::Span {
                start: self.start,
                end: self.end,
                len,
            });
        }
        Ok(())
    }
}

impl From<[usize; 2]> for Span {
    fn from(v: [usize; 2]) -> Self {
        Span::new(v[0], v[1])
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventMention {
    pub id: String,
    pub span: Span,
    pub lemma: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub id: String,
    pub span: Span,
    #[serde(rename = "type")]
    pub entity_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub e1: String,
    pub e2: String,
    pub label: RelationLabel,
}

/// A tokenized sentence with its event mentions, typed entities and gold
/// pair relations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedExample {
    pub id: String,
    pub topic: String,
    pub tokens: Vec<String>,
    #[serde(default)]
    pub events: Vec<EventMention>,
    #[serde(default)]
    pub entities: Vec<EntityMention>,
    #[serde(default)]
    pub relations: Vec<Relation>,
}

impl AnnotatedExample {
    pub fn event(&self, id: &str) -> Option<&EventMention> {
        self.events.iter().find(|e| e.id == id)
    }

    pub fn event_at(&self, span: Span) -> Option<&EventMention> {
        self.events.iter().find(|e| e.span == span)
    }

    /// Lemma of the event at `span`, or the lowercased surface text when no
    /// event mention sits exactly there.
    pub fn lemma_at(&self, span: Span) -> String {
        match self.event_at(span) {
            Some(e) => e.lemma.clone(),
            None => self.tokens[span.start..span.end.min(self.tokens.len())]
                .join("_")
                .to_lowercase(),
        }
    }

    /// True when any annotated relation is causal.
    pub fn is_causal_sentence(&self) -> bool {
        self.relations.iter().any(|r| r.label.is_causal())
    }

    /// Checks every record invariant. `entity_types`, when given, is the closed
    /// tag set entity types must come from.
    pub fn validate(&self, entity_types: Option<&BTreeSet<String>>) -> Result<()> {
        let fail = |msg: String| Err(Error::validation(&self.id, msg));
        let len = self.tokens.len();
        let mut ids = HashSet::new();
        let mut spans: Vec<(Span, &str)> = Vec::new();
        for ev in &self.events {
            if ev.span.check(len).is_err() {
                return fail(format!(
                    "event `{}` span [{}, {}] outside [0, {len})",
                    ev.id, ev.span.start, ev.span.end
                ));
            }
            if ev.lemma.is_empty() || ev.lemma != ev.lemma.to_lowercase() {
                return fail(format!("event `{}` lemma must be non-empty lowercase", ev.id));
            }
            if !ids.insert(ev.id.as_str()) {
                return fail(format!("duplicate mention id `{}`", ev.id));
            }
            spans.push((ev.span, ev.id.as_str()));
        }
        for en in &self.entities {
            if en.span.check(len).is_err() {
                return fail(format!(
                    "entity `{}` span [{}, {}] outside [0, {len})",
                    en.id, en.span.start, en.span.end
                ));
            }
            if en.entity_type.is_empty() {
                return fail(format!("entity `{}` has an empty type", en.id));
            }
            if let Some(tags) = entity_types {
                if !tags.contains(&en.entity_type) {
                    return fail(format!(
                        "entity `{}` type `{}` is not a declared tag",
                        en.id, en.entity_type
                    ));
                }
            }
            if !ids.insert(en.id.as_str()) {
                return fail(format!("duplicate mention id `{}`", en.id));
            }
            spans.push((en.span, en.id.as_str()));
        }
        for (i, (a, ida)) in spans.iter().enumerate() {
            for (b, idb) in &spans[i + 1..] {
                if a.overlaps(b) {
                    return fail(format!("mentions `{ida}` and `{idb}` overlap"));
                }
            }
        }
        for rel in &self.relations {
            if rel.e1 == rel.e2 {
                return fail(format!("relation links `{}` to itself", rel.e1));
            }
            for id in [&rel.e1, &rel.e2] {
                if self.event(id).is_none() {
                    return fail(format!("relation references unknown event `{id}`"));
                }
            }
        }
        Ok(())
    }
}

/// Parses corpus JSONL from a reader; `entity_types` restricts entity tags.
pub fn parse_corpus<R: BufRead>(
    reader: R,
    entity_types: Option<&BTreeSet<String>>,
) -> Result<Vec<AnnotatedExample>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: AnnotatedExample = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        ex.validate(entity_types)?;
        out.push(ex);
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<AnnotatedExample>> {
    load_corpus_with_types(path, None)
}

pub fn load_corpus_with_types(
    path: impl AsRef<Path>,
    entity_types: Option<&BTreeSet<String>>,
) -> Result<Vec<AnnotatedExample>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(BufReader::new(file), entity_types)
}

/// Serializes examples as JSONL, one record per line.
pub fn write_corpus<W: Write>(mut writer: W, examples: &[AnnotatedExample]) -> Result<()> {
    for ex in examples {
        serde_json::to_writer(&mut writer, ex)?;
        writer.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

pub fn save_corpus(path: impl AsRef<Path>, examples: &[AnnotatedExample]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_corpus(&mut w, examples)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// One classification unit: an unordered intra-sentence event pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub e1: String,
    pub e2: String,
    pub label: RelationLabel,
}

/// All unordered event pairs of a sentence, ordered by (span start, id) of the
/// first then the second event. A pair is causal when annotated causal in
/// either direction.
pub fn enumerate_pairs(example: &AnnotatedExample) -> Vec<LabeledPair> {
    let mut events: Vec<&EventMention> = example.events.iter().collect();
    events.sort_by(|a, b| (a.span.start, &a.id).cmp(&(b.span.start, &b.id)));
    let causal: HashSet<(&str, &str)> = example
        .relations
        .iter()
        .filter(|r| r.label.is_causal())
        .flat_map(|r| [(r.e1.as_str(), r.e2.as_str()), (r.e2.as_str(), r.e1.as_str())])
        .collect();
    let mut out = Vec::with_capacity(events.len() * events.len().saturating_sub(1) / 2);
    for (i, a) in events.iter().enumerate() {
        for b in &events[i + 1..] {
            let label = if causal.contains(&(a.id.as_str(), b.id.as_str())) {
                RelationLabel::Causal
            } else {
                RelationLabel::NonCausal
            };
            out.push(LabeledPair {
                e1: a.id.clone(),
                e2: b.id.clone(),
                label,
            });
        }
    }
    out
}

/// Topic-to-fold assignment with held-out development topics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: BTreeMap<String, usize>,
    pub dev_topics: BTreeSet<String>,
}

impl FoldPlan {
    pub fn fold_topics(&self, fold: usize) -> BTreeSet<String> {
        self.assignments
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(t, _)| t.clone())
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Round-robin topic assignment over lexicographically sorted non-dev topics.
pub fn split_folds(
    corpus: &[AnnotatedExample],
    k: usize,
    dev_topics: &BTreeSet<String>,
) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    let topics: BTreeSet<&str> = corpus
        .iter()
        .map(|e| e.topic.as_str())
        .filter(|t| !dev_topics.contains(*t))
        .collect();
    if topics.len() < k {
        return Err(Error::Config(format!(
            "{} non-dev topics cannot fill {k} folds",
            topics.len()
        )));
    }
    let assignments = topics
        .into_iter()
        .enumerate()
        .map(|(i, t)| (t.to_string(), i % k))
        .collect();
    Ok(FoldPlan {
        k,
        assignments,
        dev_topics: dev_topics.clone(),
    })
}
