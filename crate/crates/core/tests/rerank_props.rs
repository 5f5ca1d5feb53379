use std::collections::BTreeMap;

use humir_core::rerank::{
    fuse_runs, rerank_with_scorer, rrf_fuse, select_candidates, FnScorer, PairScorer, ScoreRequest,
    ScoreResponse,
};
use humir_core::{Error, RankedList, ScoredDoc};
use humir_testkit::{gen, rng};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::RngExt;

fn texts(list: &RankedList) -> BTreeMap<String, String> {
    list.doc_ids()
        .map(|d| (d.to_string(), format!("text of {d}")))
        .collect()
}

/// Whole-batch scorer, for answers that are not one per request.
struct Batch<F>(F);

impl<F> PairScorer for Batch<F>
where
    F: FnMut(&[ScoreRequest]) -> humir_core::Result<Vec<ScoreResponse>>,
{
    fn score_batch(&mut self, batch: &[ScoreRequest]) -> humir_core::Result<Vec<ScoreResponse>> {
        (self.0)(batch)
    }
}

/// Scores from a table, answered in a shuffled order.
fn table_scorer(
    scores: BTreeMap<String, f64>,
    seed: u64,
) -> impl FnMut(&[ScoreRequest]) -> humir_core::Result<Vec<ScoreResponse>> {
    let mut r = rng(seed);
    move |batch: &[ScoreRequest]| {
        let mut out: Vec<ScoreResponse> = batch
            .iter()
            .map(|q| {
                let doc = q.id.split_once("::").unwrap().1;
                ScoreResponse {
                    id: q.id.clone(),
                    score: scores[doc],
                }
            })
            .collect();
        out.shuffle(&mut r);
        Ok(out)
    }
}

#[test]
fn reranked_list_is_a_sorted_permutation() {
    for seed in 0..100 {
        let mut r = rng(seed);
        let (first, scores) = gen::candidates(&mut r, 40);
        let depth = r.random_range(1..=first.len() + 5);
        let cands = select_candidates(&first, depth).unwrap();
        let mut scorer = Batch(table_scorer(scores.clone(), seed));
        let batch = r.random_range(1..10);
        let out = rerank_with_scorer(&cands, "query", &texts(&first), &mut scorer, batch).unwrap();

        let mut got: Vec<&str> = out.doc_ids().collect();
        let mut want: Vec<&str> = first.doc_ids().take(depth).collect();
        for e in &out.entries {
            assert_eq!(e.score, scores[&e.doc_id], "seed {seed}");
        }
        for w in out.entries.windows(2) {
            assert!(
                w[0].score > w[1].score || (w[0].score == w[1].score && w[0].doc_id < w[1].doc_id),
                "seed {seed}: {:?} before {:?}",
                w[0],
                w[1]
            );
        }
        got.sort();
        want.sort();
        assert_eq!(got, want, "seed {seed}");
    }
}

#[test]
fn missing_and_unknown_answers_are_errors() {
    let first = RankedList::from_unsorted(
        "t",
        vec![ScoredDoc::new("a", 2.0), ScoredDoc::new("b", 1.0)],
    )
    .unwrap();
    let cands = select_candidates(&first, 10).unwrap();
    let mut drop_last = Batch(|b: &[ScoreRequest]| {
        Ok(b[..b.len() - 1]
            .iter()
            .map(|q| ScoreResponse {
                id: q.id.clone(),
                score: 0.0,
            })
            .collect())
    });
    let err = rerank_with_scorer(&cands, "q", &texts(&first), &mut drop_last, 8).unwrap_err();
    assert!(err.to_string().contains("t::b"), "{err}");
    let mut stranger = Batch(|_: &[ScoreRequest]| {
        Ok(vec![ScoreResponse {
            id: "t::zzz".into(),
            score: 0.0,
        }])
    });
    assert!(rerank_with_scorer(&cands, "q", &texts(&first), &mut stranger, 8).is_err());
    let mut nan = FnScorer(|_: &ScoreRequest| f64::NAN);
    assert!(rerank_with_scorer(&cands, "q", &texts(&first), &mut nan, 8).is_err());
    let no_text: BTreeMap<String, String> = BTreeMap::new();
    assert!(matches!(
        rerank_with_scorer(&cands, "q", &no_text, &mut nan, 8),
        Err(Error::NotFound(_))
    ));
}

proptest! {
    #[test]
    fn fusing_identical_runs_keeps_the_order(seed in any::<u64>(), copies in 1usize..5, k in 1.0f64..100.0) {
        let mut r = rng(seed);
        let (list, _) = gen::candidates(&mut r, 30);
        let fused = rrf_fuse(&vec![list.clone(); copies], k).unwrap();
        prop_assert_eq!(fused.doc_ids().collect::<Vec<_>>(), list.doc_ids().collect::<Vec<_>>());
        for (i, e) in fused.entries.iter().enumerate() {
            let want = copies as f64 / (k + (i + 1) as f64);
            prop_assert!((e.score - want).abs() < 1e-12);
        }
    }

    #[test]
    fn fusion_covers_the_union(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (a, _) = gen::candidates(&mut r, 20);
        let (mut b, _) = gen::candidates(&mut r, 20);
        b.entries.retain(|e| e.doc_id.ends_with(['1', '3', '5']));
        let fused = fuse_runs(&[vec![a.clone()], vec![b.clone()]], 60.0).unwrap();
        prop_assert_eq!(fused.len(), 1);
        fused[0].validate_canonical().unwrap();
        let mut ids: Vec<&str> = fused[0].doc_ids().collect();
        ids.sort();
        let mut union: Vec<&str> = a.doc_ids().chain(b.doc_ids()).collect();
        union.sort();
        union.dedup();
        prop_assert_eq!(ids, union);
    }
}
