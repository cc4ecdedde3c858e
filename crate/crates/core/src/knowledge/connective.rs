//! Discourse-connective patterns and connective-licensed pair extraction.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::corpus::{AnnotatedExample, RelationLabel, Span};
use crate::error::{Error, Result};
use crate::knowledge::{CandidatePair, Provenance};

/// Surface connectives (lowercased, possibly multi-word) with the label their
/// presence licenses.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConnectivePatternSet {
    connectives: Vec<(Vec<String>, RelationLabel)>,
}

impl ConnectivePatternSet {
    pub fn new(entries: impl IntoIterator<Item = (String, RelationLabel)>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut connectives = Vec::new();
        for (surface, label) in entries {
            let surface = surface.trim().to_lowercase();
            if surface.is_empty() {
                return Err(Error::Config("empty connective string".into()));
            }
            if !seen.insert(surface.clone()) {
                return Err(Error::Config(format!("duplicate connective `{surface}`")));
            }
            connectives.push((surface.split_whitespace().map(String::from).collect(), label));
        }
        // longest first so "because of" wins over "because"
        connectives.sort_by(|a: &(Vec<String>, _), b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));
        Ok(ConnectivePatternSet { connectives })
    }

    /// Parses `connective<TAB>label` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (surface, label) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected `connective<TAB>label`".into(),
            })?;
            let label = label.trim().parse().map_err(|e: Error| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            entries.push((surface.to_string(), label));
        }
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.connectives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.connectives.is_empty()
    }

    /// Non-overlapping connective occurrences, scanning left to right with
    /// longest match first. Tokens covered by `blocked` spans never match.
    fn matches(&self, tokens: &[String], blocked: &[Span]) -> Vec<(Span, RelationLabel)> {
        let lower: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < lower.len() {
            let hit = self.connectives.iter().find(|(words, _)| {
                let span = Span::new(i, i + words.len());
                span.end <= lower.len()
                    && lower[span.start..span.end] == words[..]
                    && !blocked.iter().any(|b| b.overlaps(&span))
            });
            match hit {
                Some((words, label)) => {
                    out.push((Span::new(i, i + words.len()), *label));
                    i += words.len();
                }
                None => i += 1,
            }
        }
        out
    }
}

/// One pair per sentence that has exactly one connective occurrence with at
/// least one event on each side: the nearest event to its left and to its
/// right.
pub fn introduce_connective(
    documents: &[AnnotatedExample],
    patterns: &ConnectivePatternSet,
) -> Vec<CandidatePair> {
    let mut out = Vec::new();
    for doc in documents {
        if doc.events.len() < 2 {
            continue;
        }
        let blocked: Vec<Span> = doc
            .events
            .iter()
            .map(|e| e.span)
            .chain(doc.entities.iter().map(|e| e.span))
            .collect();
        let hits = patterns.matches(&doc.tokens, &blocked);
        if hits.len() != 1 {
            continue;
        }
        let (conn, label) = hits[0];
        let left = doc
            .events
            .iter()
            .filter(|e| e.span.end <= conn.start)
            .max_by_key(|e| (e.span.end, std::cmp::Reverse(e.id.clone())));
        let right = doc
            .events
            .iter()
            .filter(|e| e.span.start >= conn.end)
            .min_by_key(|e| (e.span.start, e.id.clone()));
        if let (Some(l), Some(r)) = (left, right) {
            out.push(CandidatePair {
                e1: l.lemma.clone(),
                e2: r.lemma.clone(),
                provisional_label: label,
                provenance: Provenance::Connective,
                origin_id: doc.id.clone(),
                origin_events: (l.id.clone(), r.id.clone()),
            });
        }
    }
    out
}
