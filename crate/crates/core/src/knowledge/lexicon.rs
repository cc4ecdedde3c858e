//! Lexical expansion tables (synonym / hypernym / verb-class membership).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LexicalRelation {
    Synonym,
    Hypernym,
    Class,
}

impl FromStr for LexicalRelation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synonym" => Ok(LexicalRelation::Synonym),
            "hypernym" => Ok(LexicalRelation::Hypernym),
            "class" | "class-member" => Ok(LexicalRelation::Class),
            other => Err(Error::Config(format!("unknown lexical relation `{other}`"))),
        }
    }
}

impl fmt::Display for LexicalRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LexicalRelation::Synonym => "synonym",
            LexicalRelation::Hypernym => "hypernym",
            LexicalRelation::Class => "class",
        })
    }
}

/// Lemma → related lemmas. Self-links are dropped on insert and iteration is
/// always sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LexiconAdapter {
    table: BTreeMap<String, BTreeSet<(LexicalRelation, String)>>,
}

impl LexiconAdapter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, lemma: &str, relation: LexicalRelation, related: &str) {
        let lemma = lemma.trim().to_lowercase();
        let related = related.trim().to_lowercase();
        if lemma.is_empty() || related.is_empty() || lemma == related {
            return;
        }
        self.table
            .entry(lemma)
            .or_default()
            .insert((relation, related));
    }

    /// Parses `lemma<TAB>relation<TAB>related_lemma` lines; `#` starts a comment.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut lex = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected 3 tab-separated columns, found {}", cols.len()),
                });
            }
            let rel = cols[1].parse().map_err(|e: Error| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            lex.insert(cols[0], rel, cols[2]);
        }
        Ok(lex)
    }

    pub fn load_tsv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (lemma, rels) in &self.table {
            for (rel, other) in rels {
                out.push_str(&format!("{lemma}\t{rel}\t{other}\n"));
            }
        }
        out
    }

    /// Related lemmas of `lemma` (any relation), sorted, never containing
    /// `lemma` itself. Unknown lemmas expand to nothing.
    pub fn expansions(&self, lemma: &str) -> BTreeSet<String> {
        self.table
            .get(lemma)
            .map(|rels| rels.iter().map(|(_, l)| l.clone()).collect())
            .unwrap_or_default()
    }

    /// Every lemma mentioned anywhere in the table.
    pub fn lemmas(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for (k, rels) in &self.table {
            out.insert(k.clone());
            out.extend(rels.iter().map(|(_, l)| l.clone()));
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}
