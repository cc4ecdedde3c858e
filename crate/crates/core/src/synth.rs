//! Synthetic template corpus with lexicon-expandable event slots.
//!
//! Every topic owns its own cause, effect and neutral event lemmas. Causal
//! sentences pair a cause with an effect, non-causal sentences pair a
//! neutral event with an effect, and both are written into the same two
//! sentence frames, so the label is carried by the event lemmas alone. A
//! lemma from a held-out topic is therefore only reachable through the
//! lexicon (which links lemmas of the same class across topics) and through
//! the connective documents.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{save_corpus, AnnotatedExample, EntityMention, EventMention, Relation, RelationLabel, Span};
use crate::error::{Error, Result};
use crate::generation::{EntityCandidate, EntitySource};
use crate::knowledge::{save_jsonl, LexicalRelation, LexiconAdapter};
use crate::pipeline::PipelineConfig;

const CAUSES: [&str; 22] = [
    "storm", "quake", "blaze", "blast", "riot", "strike", "drought", "cyclone", "landslide",
    "tsunami", "explosion", "outbreak", "shelling", "raid", "bombing", "hurricane", "tornado",
    "eruption", "avalanche", "sabotage", "collision", "crash",
];
const EFFECTS: [&str; 22] = [
    "flood", "damage", "collapse", "injury", "outage", "evacuation", "famine", "casualty",
    "shortage", "closure", "fatality", "destruction", "panic", "displacement", "blackout",
    "recession", "delay", "cancellation", "arrest", "loss", "ruin", "wreckage",
];
const NEUTRALS: [&str; 22] = [
    "meeting", "parade", "concert", "election", "festival", "ceremony", "summit", "visit",
    "conference", "match", "tour", "launch", "auction", "exhibition", "rally", "wedding",
    "picnic", "lecture", "premiere", "fair", "holiday", "reunion",
];
const PLACES: [&str; 22] = [
    "paris", "lagos", "lima", "oslo", "cairo", "dhaka", "quito", "kyiv", "hanoi", "accra",
    "delhi", "tunis", "riga", "sofia", "dakar", "manila", "porto", "nairobi", "havana", "seoul",
    "perth", "zagreb",
];
const ORGS: [&str; 22] = [
    "red cross", "acme", "unicef", "city hall", "the navy", "oxfam", "police", "the army",
    "rail corp", "port authority", "fifa", "nasa", "the council", "water board", "the senate",
    "unesco", "air france", "the guard", "caritas", "shell", "the mayor", "interpol",
];

pub const CAUSAL_CONNECTIVES: [&str; 3] = ["therefore", "as a result", "so"];
pub const NONCAUSAL_CONNECTIVES: [&str; 3] = ["meanwhile", "and later", "while"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    /// Regular topics; one extra `dev` topic is always added.
    pub topics: usize,
    pub sentences_per_topic: usize,
    /// Connective documents per event lemma.
    pub documents_per_lemma: usize,
    /// Fraction of documents whose connective contradicts their lemma classes.
    pub document_noise: f64,
    /// Same-class lemmas from other topics listed per lemma in the lexicon.
    pub lexicon_links: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            topics: 10,
            sentences_per_topic: 45,
            documents_per_lemma: 6,
            document_noise: 0.1,
            lexicon_links: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthBundle {
    pub corpus: Vec<AnnotatedExample>,
    pub documents: Vec<AnnotatedExample>,
    pub lexicon: LexiconAdapter,
    pub connectives: String,
    pub entities: Vec<EntityCandidate>,
}

struct Register {
    topic: String,
    causes: Vec<&'static str>,
    effects: Vec<&'static str>,
    neutrals: Vec<&'static str>,
    places: Vec<&'static str>,
    orgs: Vec<&'static str>,
}

/// Builds sentences from `(text, slot)` pieces, tracking mention spans.
struct Builder {
    tokens: Vec<String>,
    events: Vec<EventMention>,
    entities: Vec<EntityMention>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            tokens: Vec::new(),
            events: Vec::new(),
            entities: Vec::new(),
        }
    }

    fn words(&mut self, text: &str) -> &mut Self {
        self.tokens.extend(text.split_whitespace().map(str::to_string));
        self
    }

    fn event(&mut self, lemma: &str) -> &mut Self {
        let start = self.tokens.len();
        self.words(&lemma.replace('_', " "));
        self.events.push(EventMention {
            id: format!("ev{}", self.events.len() + 1),
            span: Span::new(start, self.tokens.len()),
            lemma: lemma.to_string(),
        });
        self
    }

    fn entity(&mut self, surface: &str, ty: &str) -> &mut Self {
        let start = self.tokens.len();
        self.words(surface);
        self.entities.push(EntityMention {
            id: format!("en{}", self.entities.len() + 1),
            span: Span::new(start, self.tokens.len()),
            entity_type: ty.to_string(),
        });
        self
    }

    fn finish(&mut self, id: String, topic: &str, label: Option<RelationLabel>) -> AnnotatedExample {
        AnnotatedExample {
            id,
            topic: topic.to_string(),
            tokens: std::mem::take(&mut self.tokens),
            relations: label
                .map(|l| {
                    vec![Relation {
                        e1: "ev1".into(),
                        e2: "ev2".into(),
                        label: l,
                    }]
                })
                .unwrap_or_default(),
            events: std::mem::take(&mut self.events),
            entities: std::mem::take(&mut self.entities),
        }
    }
}

/// One of the two shared frames, with `first` in the first event slot.
fn frame(b: &mut Builder, which: usize, first: &str, effect: &str, place: &str, org: &str) {
    if which == 0 {
        b.words("the").event(first).words("in").entity(place, "LOC").words("was followed by").event(effect).words("at").entity(org, "ORG").words(".");
    } else {
        b.words("after the").event(first).words(",").entity(org, "ORG").words("reported").event(effect).words("in").entity(place, "LOC").words(".");
    }
}

fn registers(cfg: &SynthConfig) -> Result<Vec<Register>> {
    let n = cfg.topics + 1;
    if cfg.topics < 2 || 2 * n > CAUSES.len() {
        return Err(Error::Config(format!(
            "topics must lie in 2..={}, got {}",
            CAUSES.len() / 2 - 1,
            cfg.topics
        )));
    }
    Ok((0..n)
        .map(|t| {
            let pick = |xs: &[&'static str; 22]| vec![xs[2 * t], xs[2 * t + 1]];
            Register {
                topic: if t == cfg.topics { "dev".to_string() } else { format!("t{t:02}") },
                causes: pick(&CAUSES),
                effects: pick(&EFFECTS),
                neutrals: pick(&NEUTRALS),
                places: pick(&PLACES),
                orgs: pick(&ORGS),
            }
        })
        .collect())
}

pub fn synthesize(cfg: &SynthConfig) -> Result<SynthBundle> {
    let regs = registers(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut b = Builder::new();

    let mut corpus = Vec::new();
    for r in &regs {
        for i in 0..cfg.sentences_per_topic {
            let causal = i % 2 == 0;
            let first = if causal { r.causes.choose(&mut rng) } else { r.neutrals.choose(&mut rng) }.unwrap();
            let effect = r.effects.choose(&mut rng).unwrap();
            let place = r.places.choose(&mut rng).unwrap();
            let org = r.orgs.choose(&mut rng).unwrap();
            frame(&mut b, rng.gen_range(0..2), first, effect, place, org);
            let label = if causal { RelationLabel::Causal } else { RelationLabel::NonCausal };
            corpus.push(b.finish(format!("{}-s{i:03}", r.topic), &r.topic, Some(label)));
        }
    }

    // Connective documents over every lemma, in every register.
    let used = 2 * regs.len();
    let (causes, effects, neutrals) = (&CAUSES[..used], &EFFECTS[..used], &NEUTRALS[..used]);
    let mut documents = Vec::new();
    for (class, firsts) in [(true, causes), (false, neutrals)] {
        for first in firsts {
            for _ in 0..cfg.documents_per_lemma {
                let effect = effects.choose(&mut rng).unwrap();
                let causal = class != rng.gen_bool(cfg.document_noise);
                let conn = if causal { CAUSAL_CONNECTIVES.choose(&mut rng) } else { NONCAUSAL_CONNECTIVES.choose(&mut rng) }.unwrap();
                let place = PLACES[..used].choose(&mut rng).unwrap();
                b.words("the").event(first).words("hit").entity(place, "LOC").words(&format!(", {conn} the")).event(effect).words("came .");
                documents.push(b.finish(format!("doc{:05}", documents.len()), "documents", None));
            }
        }
    }

    // Lexicon: each lemma links to the next `lexicon_links` same-class
    // lemmas, wrapping around the used range.
    let mut lexicon = LexiconAdapter::new();
    for class in [causes, effects, neutrals] {
        for (i, lemma) in class.iter().enumerate() {
            for k in 1..=cfg.lexicon_links {
                let rel = if k == 1 { LexicalRelation::Synonym } else { LexicalRelation::Class };
                lexicon.insert(lemma, rel, class[(i + 2 * k + 1) % class.len()]);
            }
        }
    }

    let mut connectives = String::from("# connective<TAB>label\n");
    for c in CAUSAL_CONNECTIVES {
        connectives.push_str(&format!("{c}\tcausal\n"));
    }
    for c in NONCAUSAL_CONNECTIVES {
        connectives.push_str(&format!("{c}\tnon-causal\n"));
    }

    let entities = PLACES
        .iter()
        .map(|p| (p, "LOC"))
        .chain(ORGS.iter().map(|o| (o, "ORG")))
        .map(|(s, t)| EntityCandidate {
            tokens: s.split_whitespace().map(str::to_string).collect(),
            entity_type: t.to_string(),
            source: EntitySource::External,
        })
        .collect();

    Ok(SynthBundle {
        corpus,
        documents,
        lexicon,
        connectives,
        entities,
    })
}

/// Pipeline settings sized for the synthetic bundle.
pub fn synthetic_pipeline_config() -> PipelineConfig {
    PipelineConfig {
        corpus: "corpus.jsonl".into(),
        lexicon: Some("lexicon.tsv".into()),
        connectives: Some("connectives.tsv".into()),
        documents: Some("documents.jsonl".into()),
        entity_candidates: Some("entities.jsonl".into()),
        out_dir: "out".into(),
        dev_topics: vec!["dev".into()],
        ..PipelineConfig::default()
    }
}

/// Writes the bundle files and `config.toml` into `dir`.
pub fn write_bundle(dir: &Path, bundle: &SynthBundle, config: &PipelineConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: &str| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    save_corpus(dir.join("corpus.jsonl"), &bundle.corpus)?;
    save_corpus(dir.join("documents.jsonl"), &bundle.documents)?;
    write("lexicon.tsv", &bundle.lexicon.to_tsv())?;
    write("connectives.tsv", &bundle.connectives)?;
    save_jsonl(dir.join("entities.jsonl"), &bundle.entities)?;
    write("config.toml", &config.to_toml()?)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::knowledge::{introduce_connective, ConnectivePatternSet};

    #[test]
    fn corpus_shape() {
        let b = synthesize(&SynthConfig::default()).unwrap();
        assert_eq!(b.corpus.len(), 11 * 45);
        for ex in &b.corpus {
            ex.validate(None).unwrap();
            assert_eq!(ex.events.len(), 2);
        }
        let causal = b.corpus.iter().filter(|e| e.is_causal_sentence()).count();
        assert_eq!(causal, 11 * 23);
    }

    #[test]
    fn topics_have_disjoint_event_lemmas() {
        let b = synthesize(&SynthConfig::default()).unwrap();
        let lemmas = |t: &str| -> BTreeSet<String> {
            b.corpus.iter().filter(|e| e.topic == t).flat_map(|e| e.events.iter().map(|v| v.lemma.clone())).collect()
        };
        assert!(lemmas("t00").is_disjoint(&lemmas("t01")));
        assert!(lemmas("t03").is_disjoint(&lemmas("dev")));
    }

    #[test]
    fn every_document_yields_a_connective_pair() {
        let b = synthesize(&SynthConfig::default()).unwrap();
        let patterns = ConnectivePatternSet::parse(&b.connectives).unwrap();
        let pairs = introduce_connective(&b.documents, &patterns);
        let with_connective = b.documents.iter().filter(|d| d.tokens.contains(&",".to_string())).count();
        assert_eq!(pairs.len(), with_connective);
    }

    #[test]
    fn deterministic() {
        let a = synthesize(&SynthConfig::default()).unwrap();
        let b = synthesize(&SynthConfig::default()).unwrap();
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.documents, b.documents);
    }
}
