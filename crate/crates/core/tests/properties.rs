//! Property tests for the invariants the pipeline relies on.

use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;

use causaug::corpus::{
    enumerate_pairs, parse_corpus, split_folds, write_corpus, AnnotatedExample, EventMention,
    Relation, RelationLabel, Span,
};
use causaug::dualtrain::{mix_dual, mix_primal, reward_from_probs};
use causaug::eval::{f1, Confusion};
use causaug::generation::{mask_count, score, select_top, GeneratedCandidate, PairRef};
use causaug::knowledge::{rank_and_select, CandidatePair, CausalSpaceModel, Provenance};
use causaug::models::{
    fill_masks, EncoderConfig, GeneratorConfig, GeneratorPair, Vocab, MASK_TOKEN,
};

fn example(topic: String, n_tokens: usize, starts: Vec<usize>, causal: Vec<(usize, usize)>) -> AnnotatedExample {
    let events: Vec<EventMention> = starts
        .iter()
        .enumerate()
        .map(|(i, &s)| EventMention { id: format!("e{i}"), span: Span::new(s, s + 1), lemma: format!("l{s}") })
        .collect();
    let relations = causal
        .into_iter()
        .filter(|&(a, b)| a != b && a < events.len() && b < events.len())
        .map(|(a, b)| Relation { e1: format!("e{a}"), e2: format!("e{b}"), label: RelationLabel::Causal })
        .collect();
    AnnotatedExample {
        id: format!("{topic}-x"),
        topic,
        tokens: (0..n_tokens).map(|i| format!("w{i}")).collect(),
        events,
        entities: vec![],
        relations,
    }
}

fn arb_example() -> impl Strategy<Value = AnnotatedExample> {
    (
        "[a-e]",
        proptest::sample::subsequence((0..10usize).collect::<Vec<_>>(), 0..6),
        proptest::collection::vec((0..6usize, 0..6usize), 0..6),
    )
        .prop_map(|(topic, starts, causal)| example(topic, 10, starts, causal))
}

fn space(dists: &[f64]) -> CausalSpaceModel {
    // lemma i sits at (d_i, 0) and the origin lemma at 0, so pair (o, i) has
    // distance |d_i|
    let mut lemmas = vec!["o".to_string()];
    let mut vectors = vec![vec![0.0, 0.0]];
    for (i, d) in dists.iter().enumerate() {
        lemmas.push(format!("w{i}"));
        vectors.push(vec![*d, 0.0]);
    }
    CausalSpaceModel::new(2, 1.0, lemmas, vectors, vec![0.0, 0.0]).unwrap()
}

fn pairs(n: usize) -> Vec<CandidatePair> {
    (0..n)
        .map(|i| CandidatePair {
            e1: "o".into(),
            e2: format!("w{i}"),
            provisional_label: RelationLabel::NonCausal,
            provenance: Provenance::LexicalExpansion,
            origin_id: "s".into(),
            origin_events: ("a".into(), "b".into()),
        })
        .collect()
}

fn scored(id: usize, s: f64) -> GeneratedCandidate {
    GeneratedCandidate {
        id: format!("c{id:03}"),
        pair: PairRef { e1: "a".into(), e2: "b".into(), label: RelationLabel::Causal },
        tokens: vec!["a".into(), "b".into()],
        fill_positions: vec![],
        fill_probs: vec![],
        ppl: s,
        dis: Some(s),
        score: Some(s),
        origin_id: "o".into(),
        event_spans: [Span::new(0, 1), Span::new(1, 2)],
        entity_spans: vec![],
    }
}

proptest! {
    #[test]
    fn corpus_jsonl_round_trips(examples in proptest::collection::vec(arb_example(), 0..5)) {
        let mut buf = Vec::new();
        write_corpus(&mut buf, &examples).unwrap();
        let back = parse_corpus(buf.as_slice(), None).unwrap();
        prop_assert_eq!(back, examples);
    }

    #[test]
    fn every_unordered_event_pair_is_enumerated_once(ex in arb_example()) {
        let n = ex.events.len();
        let got = enumerate_pairs(&ex);
        prop_assert_eq!(got.len(), n * n.saturating_sub(1) / 2);
        let keys: BTreeSet<(String, String)> = got
            .iter()
            .map(|p| if p.e1 < p.e2 { (p.e1.clone(), p.e2.clone()) } else { (p.e2.clone(), p.e1.clone()) })
            .collect();
        prop_assert_eq!(keys.len(), got.len());
        let causal = got.iter().filter(|p| p.label.is_causal()).count();
        let annotated: BTreeSet<(String, String)> = ex
            .relations
            .iter()
            .map(|r| if r.e1 < r.e2 { (r.e1.clone(), r.e2.clone()) } else { (r.e2.clone(), r.e1.clone()) })
            .collect();
        prop_assert_eq!(causal, annotated.len());
    }

    #[test]
    fn folds_partition_topics_disjointly(examples in proptest::collection::vec(arb_example(), 1..30), k in 2usize..5) {
        let topics: BTreeSet<String> = examples.iter().map(|e| e.topic.clone()).collect();
        prop_assume!(topics.len() >= k);
        let plan = split_folds(&examples, k, &BTreeSet::new()).unwrap();
        let mut seen = BTreeSet::new();
        for f in 0..k {
            let fold = plan.fold_topics(f);
            prop_assert!(!fold.is_empty());
            for t in fold {
                prop_assert!(seen.insert(t));
            }
        }
        prop_assert_eq!(seen, topics);
    }

    #[test]
    fn selection_takes_both_extremes(
        dists in proptest::collection::vec(0.0f64..10.0, 0..30),
        alpha in 0.01f64..0.5,
        rot in 0usize..30,
    ) {
        let m = space(&dists);
        let mut ps = pairs(dists.len());
        let sel = rank_and_select(&ps, &m, alpha).unwrap();
        let k = (alpha * dists.len() as f64 + 1e-9).floor() as usize;
        prop_assert_eq!(sel.causal.len(), k);
        prop_assert_eq!(sel.noncausal.len(), k);
        if k > 0 {
            let max_c = sel.causal.iter().map(|s| s.distance).fold(f64::MIN, f64::max);
            let min_n = sel.noncausal.iter().map(|s| s.distance).fold(f64::MAX, f64::min);
            prop_assert!(max_c <= min_n);
        }
        prop_assert!(sel.causal.iter().all(|s| s.pair.provisional_label == RelationLabel::Causal));
        prop_assert!(sel.noncausal.iter().all(|s| s.pair.provisional_label == RelationLabel::NonCausal));
        if !ps.is_empty() {
            let r = rot % ps.len();
            ps.rotate_left(r);
            ps.reverse();
        }
        let again = rank_and_select(&ps, &m, alpha).unwrap();
        prop_assert_eq!(again.causal, sel.causal);
        prop_assert_eq!(again.noncausal, sel.noncausal);
    }

    #[test]
    fn filtering_keeps_the_best_beta_fraction(
        scores in proptest::collection::vec(0.0f64..1.0, 0..40),
        beta in 0.01f64..=1.0,
    ) {
        let cands: Vec<_> = scores.iter().enumerate().map(|(i, &s)| scored(i, s)).collect();
        let kept = select_top(cands.clone(), beta);
        prop_assert_eq!(kept.len(), (beta * scores.len() as f64 + 1e-9).floor() as usize);
        prop_assert!(kept.windows(2).all(|w| w[0].score >= w[1].score));
        let floor = kept.last().and_then(|c| c.score).unwrap_or(f64::INFINITY);
        let kept_ids: BTreeSet<&str> = kept.iter().map(|c| c.id.as_str()).collect();
        prop_assert!(cands
            .iter()
            .filter(|c| !kept_ids.contains(c.id.as_str()))
            .all(|c| c.score.unwrap() <= floor));
        let mut rev = cands.clone();
        rev.reverse();
        prop_assert_eq!(select_top(rev, beta), kept);
    }

    #[test]
    fn score_is_monotone_in_both_terms(
        mu in 0.0f64..=1.0,
        p in 0.0f64..1.0,
        d in -1.0f64..1.0,
        dp in 0.0f64..0.5,
        dd in 0.0f64..0.5,
    ) {
        prop_assert!(score(mu, p + dp, d) >= score(mu, p, d));
        prop_assert!(score(mu, p, d + dd) >= score(mu, p, d));
        let s = score(mu, p, d);
        prop_assert!(s >= p.min(d) - 1e-12 && s <= p.max(d) + 1e-12);
    }

    #[test]
    fn mask_count_is_the_ceiling_rule(g in 0usize..10_000) {
        let m = mask_count(g);
        prop_assert!(5 * m >= 6 * g);
        prop_assert!(m == 0 || 5 * (m - 1) < 6 * g);
    }

    #[test]
    fn reward_magnitude_is_the_top_probability(p in 0.0f64..=1.0, causal in any::<bool>()) {
        let gold = if causal { RelationLabel::Causal } else { RelationLabel::NonCausal };
        let r = reward_from_probs([p, 1.0 - p], gold);
        prop_assert!((r.abs() - p.max(1.0 - p)).abs() < 1e-12);
        // column 0 wins only on a strict majority
        prop_assert_eq!(r > 0.0, (p > 0.5) == causal);
    }

    #[test]
    fn mixing_stays_between_its_inputs(w in 0.0f64..=1.0, a in -1.0f64..=1.0, b in -1.0f64..=1.0) {
        for m in [mix_primal(w, a, b), mix_dual(w, a, b)] {
            prop_assert!(m >= a.min(b) - 1e-12 && m <= a.max(b) + 1e-12);
        }
    }

    #[test]
    fn f1_matches_its_definition(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50, tn in 0usize..50) {
        let c = Confusion { tp, fp, fn_, tn };
        let (p, r) = (c.precision(), c.recall());
        let want = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        prop_assert!((c.f1() - want).abs() < 1e-12);
        prop_assert!((f1(p, r) - want).abs() < 1e-12);
        prop_assert!(c.f1() <= p.max(r) + 1e-12 && c.f1() >= 0.0);
    }
}

fn generators() -> GeneratorPair {
    let cfg = GeneratorConfig { encoder: EncoderConfig { dim: 8, layers: 1, max_len: 16 }, ..Default::default() };
    GeneratorPair::new(cfg, Arc::new(Vocab::build(["a", "b", "c", "d"])), 1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filling_never_touches_fixed_tokens(
        slots in proptest::collection::vec(proptest::option::of(proptest::sample::select(vec!["a", "b", "c", "zz"])), 0..12),
        causal in any::<bool>(),
    ) {
        let g = generators();
        let seq: Vec<&str> = slots.iter().map(|s| s.unwrap_or(MASK_TOKEN)).collect();
        let rel = if causal { RelationLabel::Causal } else { RelationLabel::NonCausal };
        let out = fill_masks(&g, rel, &seq);
        prop_assert_eq!(out.tokens.len(), seq.len());
        let masks: Vec<usize> = (0..seq.len()).filter(|&i| seq[i] == MASK_TOKEN).collect();
        prop_assert_eq!(&out.positions, &masks);
        prop_assert_eq!(out.probs.len(), masks.len());
        for (i, t) in seq.iter().enumerate() {
            if *t != MASK_TOKEN {
                prop_assert_eq!(&out.tokens[i], t);
            } else {
                prop_assert_ne!(out.tokens[i].as_str(), MASK_TOKEN);
            }
        }
        prop_assert!(out.probs.iter().all(|p| *p > 0.0 && *p <= 1.0));
    }
}
