//! The eleven pipeline stages and their on-disk artifacts.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{enumerate_pairs, load_corpus, save_corpus, split_folds, AnnotatedExample, RelationLabel};
use crate::dualtrain::{dual_train, further_train_mix, select_augmented, substituted_sentence, DualItem, RoundLog};
use crate::error::{Error, Result};
use crate::eval::{bleu_diversity, evaluate, MetricsReport};
use crate::generation::{
    assign_entities, build_skeleton, complete_sentence, sample_sentences, score_and_filter,
    EntityAssignment, EntityCandidateSet, GeneratedCandidate,
};
use crate::knowledge::{
    annotated_pairs, expand_lexical, introduce_connective, load_jsonl, rank_and_select, save_jsonl,
    train_causal_space, CandidatePair, CausalSpaceModel, ConnectivePatternSet, LexiconAdapter,
    OriginIndex, Provenance, ScoredPair, SelectedPairRecord,
};
use crate::models::{
    pretrain_generators, pretrain_identifier, EncoderBackend, FeatureExtractor, GeneratorPair,
    GeneratorPretrainLog, IdentifierModel, PairExample, TrainLog, Vocab,
};
use crate::pipeline::config::PipelineConfig;
use crate::pipeline::manifest::{run_stage, StageStatus};
use crate::pipeline::report::{line_chart, read_csv, write_csv, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    ExtractPairs,
    TrainCausalSpace,
    SelectPairs,
    Pretrain,
    DualTrain,
    Generate,
    Filter,
    Augment,
    TrainFinal,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 11] = [
        Stage::Ingest,
        Stage::ExtractPairs,
        Stage::TrainCausalSpace,
        Stage::SelectPairs,
        Stage::Pretrain,
        Stage::DualTrain,
        Stage::Generate,
        Stage::Filter,
        Stage::Augment,
        Stage::TrainFinal,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::ExtractPairs => "extract-pairs",
            Stage::TrainCausalSpace => "train-causal-space",
            Stage::SelectPairs => "select-pairs",
            Stage::Pretrain => "pretrain",
            Stage::DualTrain => "dual-train",
            Stage::Generate => "generate",
            Stage::Filter => "filter",
            Stage::Augment => "augment",
            Stage::TrainFinal => "train-final",
            Stage::Evaluate => "evaluate",
        }
    }

    /// The artifact each stage is primarily responsible for.
    pub fn artifact(self) -> &'static str {
        match self {
            Stage::Ingest => TRAIN,
            Stage::ExtractPairs => CANDIDATES,
            Stage::TrainCausalSpace => SPACE,
            Stage::SelectPairs => SELECTED,
            Stage::Pretrain => PRE_IDENTIFIER,
            Stage::DualTrain => DUAL_IDENTIFIER,
            Stage::Generate => GENERATED,
            Stage::Filter => FILTERED,
            Stage::Augment => AUGMENTED,
            Stage::TrainFinal => FINAL_IDENTIFIER,
            Stage::Evaluate => METRICS,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

pub const TRAIN: &str = "ingest/train.jsonl";
pub const DEV: &str = "ingest/dev.jsonl";
pub const TEST: &str = "ingest/test.jsonl";
pub const FOLDS: &str = "ingest/folds.json";
pub const CANDIDATES: &str = "extract-pairs/candidates.jsonl";
pub const PAIR_STATS: &str = "extract-pairs/stats.json";
pub const SPACE: &str = "train-causal-space/space.json";
pub const SELECTED: &str = "select-pairs/selected.jsonl";
pub const SELECTION_REPORT: &str = "select-pairs/report.json";
pub const PRE_IDENTIFIER: &str = "pretrain/identifier.ckpt";
pub const PRE_GENERATORS: &str = "pretrain/generators.ckpt";
pub const PRE_LOG: &str = "pretrain/log.json";
pub const DUAL_IDENTIFIER: &str = "dual-train/identifier.ckpt";
pub const DUAL_GENERATORS: &str = "dual-train/generators.ckpt";
pub const DUAL_ROUNDS: &str = "dual-train/rounds.csv";
pub const DUAL_SUMMARY: &str = "dual-train/summary.json";
pub const DUAL_REWARDS: &str = "dual-train/rewards.jsonl";
pub const GENERATED: &str = "generate/candidates.jsonl";
pub const FILTERED: &str = "filter/filtered.jsonl";
pub const AUGMENTED: &str = "augment/augmented.jsonl";
pub const AUGMENT_STATS: &str = "augment/stats.json";
pub const FINAL_IDENTIFIER: &str = "train-final/identifier.ckpt";
pub const FINAL_LOG: &str = "train-final/log.json";
pub const METRICS: &str = "metrics.json";
pub const ROUNDS: &str = "rounds.csv";
pub const ROUNDS_SVG: &str = "rounds.svg";

pub const ROUND_HEADER: [&str; 6] = [
    "round",
    "dev_p",
    "dev_r",
    "dev_f1",
    "mean_reward_primal",
    "mean_reward_dual",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub annotated: usize,
    pub lexical_expansion: usize,
    pub connective: usize,
    pub duplicates_dropped: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainLog {
    pub identifier: TrainLog,
    pub generators: GeneratorPretrainLog,
    pub vocab_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSummary {
    pub items: usize,
    pub rounds_run: usize,
    pub best_round: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentStats {
    pub labeled: usize,
    pub filtered: usize,
    pub target: usize,
    pub used: usize,
    pub distinct_used: usize,
    /// Corpus BLEU of the filtered sentences against their origin
    /// sentences; lower means more diverse.
    pub bleu_diversity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub seed: u64,
    pub test_fold: usize,
    pub baseline: MetricsReport,
    #[serde(rename = "final")]
    pub final_: MetricsReport,
    pub f1_gain: f64,
    pub bleu_diversity: f64,
    pub augmented_used: usize,
    pub dual_rounds: usize,
    pub best_round: Option<usize>,
}

/// One pipeline run rooted at the configured output directory.
#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: PipelineConfig,
    root: PathBuf,
    hash: String,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(path, e))
}

fn lemma_words(lemma: &str) -> impl Iterator<Item = &str> {
    lemma.split('_').filter(|s| !s.is_empty())
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let root = cfg.out_dir.clone();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let hash = cfg.hash();
        Ok(Pipeline { cfg, root, hash })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn run_all(&self) -> Result<Vec<(Stage, StageStatus)>> {
        Stage::ALL
            .into_iter()
            .map(|s| self.run(s).map(|st| (s, st)))
            .collect()
    }

    pub fn run(&self, stage: Stage) -> Result<StageStatus> {
        match stage {
            Stage::Ingest => self.ingest(),
            Stage::ExtractPairs => self.extract_pairs(),
            Stage::TrainCausalSpace => self.train_space(),
            Stage::SelectPairs => self.select_pairs(),
            Stage::Pretrain => self.pretrain(),
            Stage::DualTrain => self.dual_train(),
            Stage::Generate => self.generate(),
            Stage::Filter => self.filter(),
            Stage::Augment => self.augment(),
            Stage::TrainFinal => self.train_final(),
            Stage::Evaluate => self.evaluate(),
        }
    }

    /// Reads the evaluation report of a completed run.
    pub fn report(&self) -> Result<RunReport> {
        read_json(&self.path(METRICS))
    }

    fn stage(
        &self,
        stage: Stage,
        inputs: Vec<PathBuf>,
        outputs: &[&str],
        body: impl FnOnce() -> Result<()>,
    ) -> Result<StageStatus> {
        run_stage(&self.root, stage.name(), &self.hash, &inputs, outputs, body)
    }

    fn external_inputs(&self, paths: &[&Option<PathBuf>]) -> Vec<PathBuf> {
        paths.iter().filter_map(|p| (*p).clone()).collect()
    }

    fn documents(&self) -> Result<Vec<AnnotatedExample>> {
        match &self.cfg.documents {
            Some(p) => load_corpus(p),
            None => Ok(Vec::new()),
        }
    }

    fn entities(&self, train: &[AnnotatedExample]) -> Result<EntityCandidateSet> {
        let own = EntityCandidateSet::from_corpus(train);
        match &self.cfg.entity_candidates {
            Some(p) => Ok(own.merge(&EntityCandidateSet::load(p)?)),
            None => Ok(own),
        }
    }

    fn space(&self) -> Result<Arc<CausalSpaceModel>> {
        Ok(Arc::new(CausalSpaceModel::load(self.path(SPACE))?))
    }

    fn identifier(&self, rel: &str) -> Result<IdentifierModel> {
        IdentifierModel::load(&self.path(rel), Some(self.space()?))
    }

    fn ingest(&self) -> Result<StageStatus> {
        let outputs = [TRAIN, DEV, TEST, FOLDS];
        self.stage(Stage::Ingest, vec![self.cfg.corpus.clone()], &outputs, || {
            let corpus = load_corpus(&self.cfg.corpus)?;
            let dev_topics: BTreeSet<String> = if self.cfg.dev_topics.is_empty() {
                corpus.iter().map(|e| e.topic.clone()).min().into_iter().collect()
            } else {
                self.cfg.dev_topics.iter().cloned().collect()
            };
            let plan = split_folds(&corpus, self.cfg.k, &dev_topics)?;
            let test_topics = plan.fold_topics(self.cfg.test_fold);
            let (mut train, mut dev, mut test) = (Vec::new(), Vec::new(), Vec::new());
            for ex in corpus {
                if dev_topics.contains(&ex.topic) {
                    dev.push(ex);
                } else if test_topics.contains(&ex.topic) {
                    test.push(ex);
                } else {
                    train.push(ex);
                }
            }
            save_corpus(self.path(TRAIN), &train)?;
            save_corpus(self.path(DEV), &dev)?;
            save_corpus(self.path(TEST), &test)?;
            fs::write(self.path(FOLDS), plan.to_json()? + "\n").map_err(|e| Error::io(self.path(FOLDS), e))
        })
    }

    fn extract_pairs(&self) -> Result<StageStatus> {
        let mut inputs = vec![self.path(TRAIN)];
        inputs.extend(self.external_inputs(&[&self.cfg.lexicon, &self.cfg.connectives, &self.cfg.documents]));
        self.stage(Stage::ExtractPairs, inputs, &[CANDIDATES, PAIR_STATS], || {
            let train = load_corpus(self.path(TRAIN))?;
            let annotated = annotated_pairs(&train);
            let expanded: Vec<CandidatePair> = match &self.cfg.lexicon {
                Some(p) => {
                    let lexicon = LexiconAdapter::load_tsv(p)?;
                    annotated.iter().flat_map(|a| expand_lexical(a, &lexicon)).collect()
                }
                None => Vec::new(),
            };
            let connective = match &self.cfg.connectives {
                Some(p) => introduce_connective(&self.documents()?, &ConnectivePatternSet::load(p)?),
                None => Vec::new(),
            };
            let mut stats = PairStats {
                annotated: annotated.len(),
                lexical_expansion: expanded.len(),
                connective: connective.len(),
                ..Default::default()
            };
            // One entry per lemma pair; annotated pairs take precedence over
            // connective ones, which take precedence over expansions.
            let mut seen = BTreeSet::new();
            let mut all = Vec::new();
            for p in annotated.into_iter().chain(connective).chain(expanded) {
                if seen.insert((p.e1.clone(), p.e2.clone())) {
                    all.push(p);
                } else {
                    stats.duplicates_dropped += 1;
                }
            }
            stats.total = all.len();
            save_jsonl(self.path(CANDIDATES), &all)?;
            write_json(&self.path(PAIR_STATS), &stats)
        })
    }

    fn train_space(&self) -> Result<StageStatus> {
        self.stage(Stage::TrainCausalSpace, vec![self.path(CANDIDATES)], &[SPACE], || {
            let pairs: Vec<CandidatePair> = load_jsonl(self.path(CANDIDATES))?;
            let (causal, noncausal): (Vec<CandidatePair>, Vec<CandidatePair>) = pairs
                .into_iter()
                .filter(|p| p.provenance != Provenance::LexicalExpansion)
                .partition(|p| p.provisional_label.is_causal());
            train_causal_space(&causal, &noncausal, &self.cfg.space())?.save(self.path(SPACE))
        })
    }

    fn select_pairs(&self) -> Result<StageStatus> {
        let inputs = vec![self.path(CANDIDATES), self.path(SPACE)];
        self.stage(Stage::SelectPairs, inputs, &[SELECTED, SELECTION_REPORT], || {
            let pairs: Vec<CandidatePair> = load_jsonl(self.path(CANDIDATES))?;
            let sel = rank_and_select(&pairs, &*self.space()?, self.cfg.alpha)?;
            let rows: Vec<SelectedPairRecord> = sel.causal.iter().chain(&sel.noncausal).map(Into::into).collect();
            save_jsonl(self.path(SELECTED), &rows)?;
            write_json(&self.path(SELECTION_REPORT), &sel.report)
        })
    }

    fn pretrain(&self) -> Result<StageStatus> {
        let mut inputs = vec![self.path(TRAIN), self.path(CANDIDATES), self.path(SPACE)];
        inputs.extend(self.external_inputs(&[&self.cfg.entity_candidates]));
        self.stage(Stage::Pretrain, inputs, &[PRE_IDENTIFIER, PRE_GENERATORS, PRE_LOG], || {
            let train = load_corpus(self.path(TRAIN))?;
            let pairs: Vec<CandidatePair> = load_jsonl(self.path(CANDIDATES))?;
            let entities = self.entities(&train)?;
            let mut words: BTreeSet<String> = train.iter().flat_map(|e| e.tokens.iter().cloned()).collect();
            for p in &pairs {
                words.extend(lemma_words(&p.e1).chain(lemma_words(&p.e2)).map(str::to_string));
            }
            for c in entities.entries() {
                words.extend(c.tokens.iter().cloned());
            }
            let vocab = Arc::new(Vocab::build(&words));

            let labeled = PairExample::from_corpus(&train);
            let mut features = FeatureExtractor::new(self.cfg.features(), Some(self.space()?));
            features.fit(&labeled);
            let mut identifier = IdentifierModel::new(self.cfg.identifier(), vocab.clone(), features, self.cfg.seed);
            let id_log = pretrain_identifier(&mut identifier, &labeled, &self.cfg.pretrain())?;
            identifier.save(&self.path(PRE_IDENTIFIER))?;

            let (causal, noncausal): (Vec<AnnotatedExample>, Vec<AnnotatedExample>) = train
                .iter()
                .filter(|e| e.events.len() >= 2)
                .cloned()
                .partition(|e| e.is_causal_sentence());
            let mut gens = GeneratorPair::new(self.cfg.generator(), vocab.clone(), self.cfg.seed.wrapping_add(100));
            let gen_log = pretrain_generators(&mut gens, &causal, &noncausal, &self.cfg.mlm())?;
            gens.save(&self.path(PRE_GENERATORS))?;
            write_json(
                &self.path(PRE_LOG),
                &PretrainLog {
                    identifier: id_log,
                    generators: gen_log,
                    vocab_size: vocab.len(),
                },
            )
        })
    }

    fn origins(&self, train: &[AnnotatedExample]) -> Result<OriginIndex> {
        let docs = self.documents()?;
        OriginIndex::new([train, docs.as_slice()])
    }

    fn origin_inputs(&self) -> Vec<PathBuf> {
        let mut v = vec![self.path(TRAIN)];
        v.extend(self.external_inputs(&[&self.cfg.documents, &self.cfg.entity_candidates]));
        v
    }

    fn selected(&self) -> Result<Vec<CandidatePair>> {
        let rows: Vec<SelectedPairRecord> = load_jsonl(self.path(SELECTED))?;
        Ok(rows.iter().map(|r| ScoredPair::from(r).pair).collect())
    }

    fn dual_train(&self) -> Result<StageStatus> {
        let mut inputs = vec![self.path(SELECTED), self.path(DEV), self.path(SPACE), self.path(PRE_IDENTIFIER), self.path(PRE_GENERATORS)];
        inputs.extend(self.origin_inputs());
        let mut outputs = vec![DUAL_IDENTIFIER, DUAL_GENERATORS, DUAL_ROUNDS, DUAL_SUMMARY];
        if self.cfg.dump_rewards {
            outputs.push(DUAL_REWARDS);
        }
        self.stage(Stage::DualTrain, inputs, &outputs, || {
            let train = load_corpus(self.path(TRAIN))?;
            let dev = PairExample::from_corpus(&load_corpus(self.path(DEV))?);
            let origins = self.origins(&train)?;
            let entities = self.entities(&train)?;
            let identifier = self.identifier(PRE_IDENTIFIER)?;
            let gens = GeneratorPair::load(&self.path(PRE_GENERATORS))?;

            let mut pairs: Vec<(usize, CandidatePair)> = self.selected()?.into_iter().enumerate().collect();
            if self.cfg.max_dual_items > 0 && pairs.len() > self.cfg.max_dual_items {
                pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(self.cfg.seed.wrapping_add(11)));
                pairs.truncate(self.cfg.max_dual_items);
                pairs.sort_by_key(|(i, _)| *i);
            }
            let assignments = assignments(pairs.iter().map(|(_, p)| p), &origins, &entities, &identifier)?;
            let items: Vec<DualItem> = pairs
                .par_iter()
                .map(|(i, p)| {
                    let origin = origins.get(&p.origin_id)?;
                    Ok(DualItem {
                        id: format!("p{i:06}"),
                        skeleton: build_skeleton(p, &assignments[&p.origin_id], origin)?,
                        sentence: substituted_sentence(p, origin)?,
                        gold: p.provisional_label,
                    })
                })
                .collect::<Result<_>>()?;
            let outcome = dual_train(&items, gens, identifier, &dev, &self.cfg.dual())?;
            outcome.identifier.save(&self.path(DUAL_IDENTIFIER))?;
            outcome.generators.save(&self.path(DUAL_GENERATORS))?;
            write_csv(&self.path(DUAL_ROUNDS), &outcome.rounds, &ROUND_HEADER)?;
            write_json(
                &self.path(DUAL_SUMMARY),
                &DualSummary {
                    items: items.len(),
                    rounds_run: outcome.rounds.len(),
                    best_round: outcome.best_round,
                },
            )?;
            if self.cfg.dump_rewards {
                save_jsonl(self.path(DUAL_REWARDS), &outcome.rewards)?;
            }
            Ok(())
        })
    }

    fn generate(&self) -> Result<StageStatus> {
        let mut inputs = vec![self.path(SELECTED), self.path(SPACE), self.path(DUAL_IDENTIFIER), self.path(DUAL_GENERATORS)];
        inputs.extend(self.origin_inputs());
        self.stage(Stage::Generate, inputs, &[GENERATED], || {
            let train = load_corpus(self.path(TRAIN))?;
            let origins = self.origins(&train)?;
            let entities = self.entities(&train)?;
            let identifier = self.identifier(DUAL_IDENTIFIER)?;
            let gens = GeneratorPair::load(&self.path(DUAL_GENERATORS))?;
            let pairs = self.selected()?;

            // Training sentences per label, each with its first pair of that
            // label, as alternative origins.
            let mut by_label: BTreeMap<RelationLabel, Vec<(String, (String, String))>> = BTreeMap::new();
            for ex in &train {
                let mut seen = BTreeSet::new();
                for lp in enumerate_pairs(ex) {
                    if seen.insert(lp.label) {
                        by_label.entry(lp.label).or_default().push((ex.id.clone(), (lp.e1, lp.e2)));
                    }
                }
            }
            let extra = self.cfg.max_candidates_per_pair - 1;
            let jobs: Vec<Vec<CandidatePair>> = pairs
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let mut v = vec![p.clone()];
                    if extra > 0 {
                        let pool: Vec<&(String, (String, String))> = by_label
                            .get(&p.provisional_label)
                            .map(|l| l.iter().filter(|(id, _)| *id != p.origin_id).collect())
                            .unwrap_or_default();
                        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                        for (id, evs) in pool.choose_multiple(&mut rng, extra) {
                            let mut q = p.clone();
                            q.origin_id = id.clone();
                            q.origin_events = evs.clone();
                            v.push(q);
                        }
                    }
                    v
                })
                .collect();
            let assignments = assignments(jobs.iter().flatten(), &origins, &entities, &identifier)?;
            let cands: Vec<Vec<GeneratedCandidate>> = jobs
                .par_iter()
                .enumerate()
                .map(|(i, js)| {
                    js.iter()
                        .enumerate()
                        .map(|(j, p)| {
                            let sk = build_skeleton(p, &assignments[&p.origin_id], origins.get(&p.origin_id)?)?;
                            Ok(complete_sentence(&gens, &sk, format!("c{i:06}-{j}")))
                        })
                        .collect()
                })
                .collect::<Result<_>>()?;
            let cands: Vec<GeneratedCandidate> = cands.into_iter().flatten().collect();
            save_jsonl(self.path(GENERATED), &cands)
        })
    }

    fn filter(&self) -> Result<StageStatus> {
        let inputs = vec![self.path(GENERATED), self.path(TRAIN), self.path(SPACE), self.path(DUAL_IDENTIFIER)];
        self.stage(Stage::Filter, inputs, &[FILTERED], || {
            let train = load_corpus(self.path(TRAIN))?;
            let cands: Vec<GeneratedCandidate> = load_jsonl(self.path(GENERATED))?;
            let identifier = self.identifier(DUAL_IDENTIFIER)?;
            let sample = sample_sentences(&train, self.cfg.m, self.cfg.seed.wrapping_add(17));
            let kept = score_and_filter(cands, self.cfg.mu, self.cfg.beta, &sample, &identifier, self.cfg.dis_mode)?;
            save_jsonl(self.path(FILTERED), &kept)
        })
    }

    fn augment(&self) -> Result<StageStatus> {
        let mut inputs = vec![self.path(FILTERED)];
        inputs.extend(self.origin_inputs());
        self.stage(Stage::Augment, inputs, &[AUGMENTED, AUGMENT_STATS], || {
            let train = load_corpus(self.path(TRAIN))?;
            let origins = self.origins(&train)?;
            let filtered: Vec<GeneratedCandidate> = load_jsonl(self.path(FILTERED))?;
            let labeled = PairExample::from_corpus(&train).len();
            let target = self.cfg.plan().augmented_count(labeled);
            let chosen = select_augmented(&filtered, target, self.cfg.further().seed);
            let distinct: BTreeSet<&str> = chosen.iter().map(|c| c.id.as_str()).collect();
            let bleu = if filtered.is_empty() {
                0.0
            } else {
                let generated: Vec<&[String]> = filtered.iter().map(|c| c.tokens.as_slice()).collect();
                let references: Vec<&[String]> = filtered
                    .iter()
                    .map(|c| origins.get(&c.origin_id).map(|o| o.tokens.as_slice()))
                    .collect::<Result<_>>()?;
                let generated: Vec<Vec<&String>> = generated.iter().map(|t| t.iter().collect()).collect();
                let references: Vec<Vec<&String>> = references.iter().map(|t| t.iter().collect()).collect();
                bleu_diversity(&generated, &references)?
            };
            save_jsonl(self.path(AUGMENTED), &chosen)?;
            write_json(
                &self.path(AUGMENT_STATS),
                &AugmentStats {
                    labeled,
                    filtered: filtered.len(),
                    target,
                    used: chosen.len(),
                    distinct_used: distinct.len(),
                    bleu_diversity: bleu,
                },
            )
        })
    }

    fn train_final(&self) -> Result<StageStatus> {
        let inputs = vec![self.path(AUGMENTED), self.path(TRAIN), self.path(SPACE), self.path(DUAL_IDENTIFIER)];
        self.stage(Stage::TrainFinal, inputs, &[FINAL_IDENTIFIER, FINAL_LOG], || {
            let train = load_corpus(self.path(TRAIN))?;
            let augmented: Vec<PairExample> = load_jsonl(self.path(AUGMENTED))?;
            let identifier = self.identifier(DUAL_IDENTIFIER)?;
            let labeled = PairExample::from_corpus(&train);
            let (model, report) = further_train_mix(identifier, &labeled, &augmented, &self.cfg.plan(), &self.cfg.further())?;
            model.save(&self.path(FINAL_IDENTIFIER))?;
            write_json(&self.path(FINAL_LOG), &report)
        })
    }

    fn evaluate(&self) -> Result<StageStatus> {
        let inputs = vec![
            self.path(TEST),
            self.path(SPACE),
            self.path(PRE_IDENTIFIER),
            self.path(FINAL_IDENTIFIER),
            self.path(AUGMENT_STATS),
            self.path(DUAL_ROUNDS),
            self.path(DUAL_SUMMARY),
        ];
        self.stage(Stage::Evaluate, inputs, &[METRICS, ROUNDS, ROUNDS_SVG], || {
            let test = PairExample::from_corpus(&load_corpus(self.path(TEST))?);
            let baseline = evaluate(&self.identifier(PRE_IDENTIFIER)?, &test)?;
            let final_ = evaluate(&self.identifier(FINAL_IDENTIFIER)?, &test)?;
            let aug: AugmentStats = read_json(&self.path(AUGMENT_STATS))?;
            let summary: DualSummary = read_json(&self.path(DUAL_SUMMARY))?;
            let report = RunReport {
                config_hash: self.hash.clone(),
                seed: self.cfg.seed,
                test_fold: self.cfg.test_fold,
                f1_gain: final_.f1 - baseline.f1,
                baseline,
                final_,
                bleu_diversity: aug.bleu_diversity,
                augmented_used: aug.used,
                dual_rounds: summary.rounds_run,
                best_round: summary.best_round,
            };
            write_json(&self.path(METRICS), &report)?;
            let rounds: Vec<RoundLog> = read_csv(&self.path(DUAL_ROUNDS))?;
            write_csv(&self.path(ROUNDS), &rounds, &ROUND_HEADER)?;
            let labels: Vec<String> = rounds.iter().map(|r| r.round.to_string()).collect();
            let svg = line_chart(
                "dev scores per dual-training round",
                &labels,
                &[
                    Series { name: "dev F1", values: rounds.iter().map(|r| r.dev_f1).collect() },
                    Series { name: "dev P", values: rounds.iter().map(|r| r.dev_p).collect() },
                    Series { name: "dev R", values: rounds.iter().map(|r| r.dev_r).collect() },
                ],
            );
            fs::write(self.path(ROUNDS_SVG), svg).map_err(|e| Error::io(self.path(ROUNDS_SVG), e))
        })
    }
}

/// Entity assignments per origin sentence, computed once for each distinct
/// origin among `pairs`.
fn assignments<'a>(
    pairs: impl Iterator<Item = &'a CandidatePair>,
    origins: &OriginIndex,
    entities: &EntityCandidateSet,
    backend: &dyn EncoderBackend,
) -> Result<HashMap<String, BTreeMap<String, EntityAssignment>>> {
    let mut first: BTreeMap<&str, &CandidatePair> = BTreeMap::new();
    for p in pairs {
        first.entry(p.origin_id.as_str()).or_insert(p);
    }
    first
        .into_par_iter()
        .map(|(id, p)| {
            let a = assign_entities(p, origins.get(id)?, entities, backend)?;
            Ok((id.to_string(), a))
        })
        .collect()
}
