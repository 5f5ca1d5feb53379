use std::collections::BTreeSet;

use humir_core::corpus::QrelSet;
use humir_core::metrics::{
    average_precision, compare_runs, evaluate_run, gmap, ndcg_at_k, precision_at_k, r_precision,
    reciprocal_rank, EvalOptions, MetricReport, ZeroRelevant, GMAP_EPSILON,
};
use humir_core::{RankedList, ScoredDoc};
use humir_testkit::{gen, oracle, rng};
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL
}

fn list(topic: &str, ids: &[&str]) -> RankedList {
    let n = ids.len();
    RankedList {
        topic_id: topic.into(),
        entries: ids
            .iter()
            .enumerate()
            .map(|(i, d)| ScoredDoc::new(*d, (n - i) as f64))
            .collect(),
    }
}

fn qrels(topic: &str, rel: &[&str], nonrel: &[&str]) -> QrelSet {
    let mut q = QrelSet::new();
    for d in rel {
        q.insert(topic, d, 1).unwrap();
    }
    for d in nonrel {
        q.insert(topic, d, 0).unwrap();
    }
    q
}

fn check_against_oracle(seed: u64, mode: ZeroRelevant) {
    let mut r = rng(seed);
    let c = gen::mini_collection(&mut r, 30, 10);
    let report = evaluate_run(
        &c.run,
        &c.qrels,
        EvalOptions {
            zero_relevant: mode,
        },
    )
    .unwrap();
    let expected = oracle::evaluate(&c.run_docs, &c.relevant, mode == ZeroRelevant::ScoreAsZero);
    assert_eq!(report.per_query.len(), expected.len(), "seed {seed}");
    for (got, (topic, want)) in report.per_query.iter().zip(&expected) {
        assert_eq!(&got.topic_id, topic, "seed {seed}");
        assert_eq!(
            (got.num_ret, got.num_rel, got.num_rel_ret),
            (want.num_ret, want.num_rel, want.num_rel_ret)
        );
        let pairs = [
            (got.ap, want.ap),
            (got.r_prec, want.r_prec),
            (got.rr, want.rr),
            (got.p_at[&5], want.p_5),
            (got.p_at[&10], want.p_10),
            (got.p_at[&100], want.p_100),
            (got.ndcg_at[&5], want.ndcg_5),
            (got.ndcg_at[&10], want.ndcg_10),
        ];
        for (i, (g, w)) in pairs.iter().enumerate() {
            assert!(
                close(*g, *w),
                "seed {seed} topic {topic} metric #{i}: {g} vs {w}"
            );
        }
    }
    let n = expected.len() as f64;
    let mean = |f: fn(&oracle::TopicScores) -> f64| {
        if expected.is_empty() {
            0.0
        } else {
            expected.iter().map(|(_, s)| f(s)).sum::<f64>() / n
        }
    };
    let aps: Vec<f64> = expected.iter().map(|(_, s)| s.ap).collect();
    let s = &report.summary;
    assert!(close(s.map, mean(|s| s.ap)), "seed {seed}");
    assert!(close(s.gmap, oracle::gmap(&aps, 1e-5)), "seed {seed}");
    assert!(close(s.r_prec, mean(|s| s.r_prec)));
    assert!(close(s.mrr, mean(|s| s.rr)));
    assert!(close(s.p_at[&5], mean(|s| s.p_5)));
    assert!(close(s.p_at[&10], mean(|s| s.p_10)));
    assert!(close(s.p_at[&100], mean(|s| s.p_100)));
    assert!(close(s.ndcg_at[&5], mean(|s| s.ndcg_5)));
    assert!(close(s.ndcg_at[&10], mean(|s| s.ndcg_10)));
}

#[test]
fn random_collections_match_oracle() {
    for seed in 0..200 {
        check_against_oracle(seed, ZeroRelevant::Exclude);
    }
}

#[test]
fn random_collections_match_oracle_when_zero_rel_topics_count() {
    for seed in 1000..1100 {
        check_against_oracle(seed, ZeroRelevant::ScoreAsZero);
    }
}

#[test]
fn hand_worked_values() {
    let q = qrels("t", &["d1", "d3"], &["d2"]);
    assert!((average_precision(&list("t", &["d1", "d2", "d3"]), &q) - 0.833333).abs() < 1e-5);
    let q1 = qrels("t", &["d2"], &[]);
    assert!((ndcg_at_k(&list("t", &["d1", "d2"]), &q1, 5).unwrap() - 0.63093).abs() < 1e-5);
    assert!((gmap(&[1.0, 0.0], GMAP_EPSILON) - 0.0031623).abs() < 1e-5);
}

#[test]
fn unretrieved_relevant_and_empty_rankings() {
    let q = qrels("t", &["a", "b"], &[]);
    let only_a = list("t", &["x", "a"]);
    assert!(close(average_precision(&only_a, &q), 0.25));
    assert!(close(r_precision(&only_a, &q), 0.5));
    assert!(close(reciprocal_rank(&only_a, &q), 0.5));
    let none = RankedList::empty("t");
    assert_eq!(average_precision(&none, &q), 0.0);
    assert_eq!(precision_at_k(&none, &q, 5).unwrap(), 0.0);
    assert_eq!(ndcg_at_k(&none, &q, 5).unwrap(), 0.0);
}

#[test]
fn judged_topic_missing_from_run_scores_zero() {
    let mut q = qrels("a", &["d1"], &[]);
    q.insert("b", "d2", 1).unwrap();
    let report = evaluate_run(&[list("a", &["d1"])], &q, EvalOptions::default()).unwrap();
    assert_eq!(report.evaluated_topics, 2);
    assert!(close(report.summary.map, 0.5));
    assert!(close(report.summary.gmap, (1.0f64 * 1e-5).sqrt()));
}

#[test]
fn ap_for_table_style_percentages() {
    let report = |aps: &[f64]| {
        MetricReport::from_per_query(
            aps.iter()
                .enumerate()
                .map(|(i, &ap)| {
                    let mut q = evaluate_run(
                        &[],
                        &qrels(&format!("t{i}"), &["d"], &[]),
                        EvalOptions::default(),
                    )
                    .unwrap()
                    .per_query
                    .remove(0);
                    q.ap = ap;
                    q
                })
                .collect(),
        )
    };
    let cmp = compare_runs(
        &[report(&[0.0042, 0.0042]), report(&[0.0276, 0.0])],
        &["weak".into(), "strong".into()],
    )
    .unwrap();
    let cells = cmp.cells();
    assert_eq!(cells[0][0], "strong");
    assert_eq!(cells[0][3], "1.38");
    assert_eq!(cells[1][3], "0.42");
}

fn relevance_case() -> impl Strategy<Value = (Vec<String>, BTreeSet<String>)> {
    (1usize..25).prop_flat_map(|n| {
        let ids: Vec<String> = (0..n).map(|i| format!("d{i:02}")).collect();
        (
            Just(ids.clone()).prop_shuffle(),
            proptest::sample::subsequence(ids, 0..=n),
        )
            .prop_map(|(ranking, rel)| (ranking, rel.into_iter().collect()))
    })
}

fn as_list(ranking: &[String]) -> RankedList {
    list("t", &ranking.iter().map(String::as_str).collect::<Vec<_>>())
}

fn as_qrels(rel: &BTreeSet<String>, ranking: &[String]) -> QrelSet {
    let mut q = QrelSet::new();
    for d in ranking {
        q.insert("t", d, i64::from(rel.contains(d))).unwrap();
    }
    q
}

proptest! {
    #[test]
    fn metrics_lie_in_unit_interval((ranking, rel) in relevance_case()) {
        let (l, q) = (as_list(&ranking), as_qrels(&rel, &ranking));
        for v in [
            average_precision(&l, &q),
            r_precision(&l, &q),
            reciprocal_rank(&l, &q),
            precision_at_k(&l, &q, 5).unwrap(),
            ndcg_at_k(&l, &q, 10).unwrap(),
        ] {
            prop_assert!((0.0..=1.0 + TOL).contains(&v));
        }
    }

    #[test]
    fn promoting_a_relevant_document_never_hurts((ranking, rel) in relevance_case(), pick in any::<prop::sample::Index>()) {
        let q = as_qrels(&rel, &ranking);
        let positions: Vec<usize> = (1..ranking.len())
            .filter(|&i| rel.contains(&ranking[i]) && !rel.contains(&ranking[i - 1]))
            .collect();
        prop_assume!(!positions.is_empty());
        let i = positions[pick.index(positions.len())];
        let mut better = ranking.clone();
        better.swap(i - 1, i);
        let (before, after) = (as_list(&ranking), as_list(&better));
        prop_assert!(average_precision(&after, &q) + TOL >= average_precision(&before, &q));
        prop_assert!(ndcg_at_k(&after, &q, 10).unwrap() + TOL >= ndcg_at_k(&before, &q, 10).unwrap());
        prop_assert!(reciprocal_rank(&after, &q) + TOL >= reciprocal_rank(&before, &q));
        prop_assert!(r_precision(&after, &q) + TOL >= r_precision(&before, &q));
    }

    #[test]
    fn reordering_within_relevance_classes_changes_nothing((ranking, rel) in relevance_case(), seed in any::<u64>()) {
        // Swapping two relevant (or two non-relevant) documents leaves the
        // relevance pattern intact.
        let q = as_qrels(&rel, &ranking);
        let mut r = rng(seed);
        let mut shuffled = ranking.clone();
        let rel_pos: Vec<usize> = (0..ranking.len()).filter(|&i| rel.contains(&ranking[i])).collect();
        let mut rel_docs: Vec<String> = rel_pos.iter().map(|&i| ranking[i].clone()).collect();
        rand::seq::SliceRandom::shuffle(rel_docs.as_mut_slice(), &mut r);
        for (&i, d) in rel_pos.iter().zip(rel_docs) {
            shuffled[i] = d;
        }
        let (a, b) = (as_list(&ranking), as_list(&shuffled));
        prop_assert_eq!(average_precision(&a, &q), average_precision(&b, &q));
        prop_assert_eq!(ndcg_at_k(&a, &q, 5).unwrap(), ndcg_at_k(&b, &q, 5).unwrap());
    }

    #[test]
    fn trailing_non_relevant_documents_do_not_change_ap((ranking, rel) in relevance_case(), extra in 1usize..10) {
        let q = as_qrels(&rel, &ranking);
        let mut longer = ranking.clone();
        longer.extend((0..extra).map(|i| format!("x{i}")));
        prop_assert!(close(average_precision(&as_list(&ranking), &q), average_precision(&as_list(&longer), &q)));
    }
}
