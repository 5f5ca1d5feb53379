//! Per-query effectiveness metrics over binary relevance.
//!
//! Conventions follow trec_eval:
//!
//! * ranks start at 1 and follow list order
//! * `R` is the number of relevant documents in the qrels, retrieved or not
//! * P@K always divides by K, even when fewer than K documents were returned
//! * nDCG uses binary gains and a `log2(rank + 1)` discount
//! * GMAP floors each AP at `1e-5` before taking logs
//!
//! Every function returns 0 for a topic with no relevant documents.

mod report;

pub use report::{
    compare_runs, evaluate_run, write_per_query_tsv, Comparison, ComparisonRow, EvalOptions,
    MetricReport, PerQueryResult, Summary, ZeroRelevant, NDCG_CUTOFFS, PRECISION_CUTOFFS,
};

use crate::corpus::QrelSet;
use crate::error::{Error, Result};
use crate::ranking::RankedList;

pub const GMAP_EPSILON: f64 = 1e-5;

fn relevance_flags<'a>(
    ranking: &'a RankedList,
    qrels: &'a QrelSet,
) -> impl Iterator<Item = bool> + 'a {
    ranking
        .entries
        .iter()
        .map(move |e| qrels.is_relevant(&ranking.topic_id, &e.doc_id))
}

pub fn average_precision(ranking: &RankedList, qrels: &QrelSet) -> f64 {
    let r = qrels.num_relevant(&ranking.topic_id);
    if r == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, rel) in relevance_flags(ranking, qrels).enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / r as f64
}

/// Geometric mean of APs, each floored at `epsilon`.
pub fn gmap(aps: &[f64], epsilon: f64) -> f64 {
    if aps.is_empty() {
        return 0.0;
    }
    let mean_log = aps.iter().map(|&ap| ap.max(epsilon).ln()).sum::<f64>() / aps.len() as f64;
    mean_log.exp()
}

pub fn r_precision(ranking: &RankedList, qrels: &QrelSet) -> f64 {
    let r = qrels.num_relevant(&ranking.topic_id);
    if r == 0 {
        return 0.0;
    }
    let hits = relevance_flags(ranking, qrels)
        .take(r)
        .filter(|&x| x)
        .count();
    hits as f64 / r as f64
}

pub fn reciprocal_rank(ranking: &RankedList, qrels: &QrelSet) -> f64 {
    relevance_flags(ranking, qrels)
        .position(|x| x)
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

pub fn precision_at_k(ranking: &RankedList, qrels: &QrelSet, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "precision cutoff must be at least 1".into(),
        ));
    }
    let hits = relevance_flags(ranking, qrels)
        .take(k)
        .filter(|&x| x)
        .count();
    Ok(hits as f64 / k as f64)
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

pub fn ndcg_at_k(ranking: &RankedList, qrels: &QrelSet, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "nDCG cutoff must be at least 1".into(),
        ));
    }
    let r = qrels.num_relevant(&ranking.topic_id);
    if r == 0 {
        return Ok(0.0);
    }
    let dcg: f64 = relevance_flags(ranking, qrels)
        .take(k)
        .enumerate()
        .filter(|&(_, rel)| rel)
        .map(|(i, _)| discount(i + 1))
        .sum();
    let idcg: f64 = (1..=k.min(r)).map(discount).sum();
    Ok(dcg / idcg + 0.0)
}

/// Relevant documents anywhere in the ranking.
pub fn num_rel_ret(ranking: &RankedList, qrels: &QrelSet) -> usize {
    relevance_flags(ranking, qrels).filter(|&x| x).count()
}
