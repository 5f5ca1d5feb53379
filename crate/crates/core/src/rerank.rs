//! Second-stage re-scoring of a candidate set and reciprocal rank fusion.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use tracing::debug;

use crate::error::{Error, Result};
use crate::ranking::{RankedList, ScoredDoc};

pub const DEFAULT_RRF_K: f64 = 60.0;

/// The head of a first-stage ranking handed to the re-ranker.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub topic_id: String,
    pub candidates: Vec<ScoredDoc>,
    pub depth: usize,
}

/// Keeps the first `min(depth, |run|)` entries in order.
pub fn select_candidates(run: &RankedList, depth: usize) -> Result<CandidateSet> {
    if depth == 0 {
        return Err(Error::InvalidArgument(
            "rerank depth must be at least 1".into(),
        ));
    }
    Ok(CandidateSet {
        topic_id: run.topic_id.clone(),
        candidates: run.entries.iter().take(depth).cloned().collect(),
        depth,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub id: String,
    pub query: String,
    pub doc: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub id: String,
    pub score: f64,
}

/// Anything that can score (query, document) pairs. Responses may come back
/// in any order but must answer every request exactly once.
pub trait PairScorer {
    fn score_batch(&mut self, batch: &[ScoreRequest]) -> Result<Vec<ScoreResponse>>;
}

/// Adapts a closure over single requests into a [`PairScorer`].
pub struct FnScorer<F>(pub F);

impl<F> PairScorer for FnScorer<F>
where
    F: FnMut(&ScoreRequest) -> f64,
{
    fn score_batch(&mut self, batch: &[ScoreRequest]) -> Result<Vec<ScoreResponse>> {
        Ok(batch
            .iter()
            .map(|r| ScoreResponse {
                id: r.id.clone(),
                score: (self.0)(r),
            })
            .collect())
    }
}

/// Resolves a document id to its text.
pub trait TextLookup {
    fn text(&self, doc_id: &str) -> Option<&str>;
}

impl TextLookup for HashMap<String, String> {
    fn text(&self, doc_id: &str) -> Option<&str> {
        self.get(doc_id).map(String::as_str)
    }
}

impl TextLookup for BTreeMap<String, String> {
    fn text(&self, doc_id: &str) -> Option<&str> {
        self.get(doc_id).map(String::as_str)
    }
}

/// Pair ids are `topic::doc`, unique within a topic's candidate set.
pub fn pair_id(topic_id: &str, doc_id: &str) -> String {
    format!("{topic_id}::{doc_id}")
}

/// Re-scores every candidate with `scorer` and re-sorts by the new score
/// (ties by doc id). First-stage scores are discarded.
pub fn rerank_with_scorer(
    cands: &CandidateSet,
    query_text: &str,
    texts: &dyn TextLookup,
    scorer: &mut dyn PairScorer,
    batch_size: usize,
) -> Result<RankedList> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument(
            "batch size must be at least 1".into(),
        ));
    }
    let mut requests = Vec::with_capacity(cands.candidates.len());
    let mut doc_of: HashMap<String, &str> = HashMap::with_capacity(cands.candidates.len());
    for c in &cands.candidates {
        let doc = texts
            .text(&c.doc_id)
            .ok_or_else(|| Error::NotFound(format!("text for document `{}`", c.doc_id)))?;
        let id = pair_id(&cands.topic_id, &c.doc_id);
        if doc_of.insert(id.clone(), &c.doc_id).is_some() {
            return Err(Error::InvalidRanking(format!(
                "topic {}: duplicate candidate `{}`",
                cands.topic_id, c.doc_id
            )));
        }
        requests.push(ScoreRequest {
            id,
            query: query_text.to_string(),
            doc: doc.to_string(),
        });
    }

    let mut entries = Vec::with_capacity(requests.len());
    for batch in requests.chunks(batch_size) {
        let responses = scorer.score_batch(batch)?;
        let expected: HashSet<&str> = batch.iter().map(|r| r.id.as_str()).collect();
        let mut answered = HashSet::with_capacity(batch.len());
        for resp in &responses {
            if !expected.contains(resp.id.as_str()) {
                return Err(Error::Scorer {
                    pair_id: resp.id.clone(),
                    message: "response for a pair not in this batch".into(),
                });
            }
            if !answered.insert(resp.id.as_str()) {
                return Err(Error::Scorer {
                    pair_id: resp.id.clone(),
                    message: "answered more than once".into(),
                });
            }
            if !resp.score.is_finite() {
                return Err(Error::Scorer {
                    pair_id: resp.id.clone(),
                    message: format!("non-finite score {}", resp.score),
                });
            }
            entries.push(ScoredDoc::new(doc_of[resp.id.as_str()], resp.score + 0.0));
        }
        if let Some(missing) = batch.iter().find(|r| !answered.contains(r.id.as_str())) {
            return Err(Error::Scorer {
                pair_id: missing.id.clone(),
                message: "no response".into(),
            });
        }
    }
    debug!(topic = %cands.topic_id, n = entries.len(), "reranked");
    RankedList::from_unsorted(cands.topic_id.clone(), entries)
}

/// Reciprocal rank fusion of rankings for one topic:
/// `score(d) = Σ_runs 1 / (k_rrf + rank(d))` with 1-based ranks.
pub fn rrf_fuse(runs: &[RankedList], k_rrf: f64) -> Result<RankedList> {
    if !(k_rrf > 0.0 && k_rrf.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "RRF constant must be > 0, got {k_rrf}"
        )));
    }
    let first = runs
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to fuse".into()))?;
    if let Some(other) = runs.iter().find(|r| r.topic_id != first.topic_id) {
        return Err(Error::InvalidArgument(format!(
            "cannot fuse rankings for different topics `{}` and `{}`",
            first.topic_id, other.topic_id
        )));
    }
    let mut fused: HashMap<&str, f64> = HashMap::new();
    for run in runs {
        for (i, e) in run.entries.iter().enumerate() {
            *fused.entry(&e.doc_id).or_insert(0.0) += 1.0 / (k_rrf + (i + 1) as f64);
        }
    }
    let entries = fused
        .into_iter()
        .map(|(d, s)| ScoredDoc::new(d, s))
        .collect();
    RankedList::from_unsorted(first.topic_id.clone(), entries)
}

/// Fuses whole runs topic by topic. Topics keep first-appearance order;
/// a topic missing from some runs is fused over the runs that have it.
pub fn fuse_runs(runs: &[Vec<RankedList>], k_rrf: f64) -> Result<Vec<RankedList>> {
    let mut order: Vec<&str> = Vec::new();
    let mut by_topic: HashMap<&str, Vec<RankedList>> = HashMap::new();
    for run in runs {
        for list in run {
            let slot = by_topic.entry(&list.topic_id).or_insert_with(|| {
                order.push(&list.topic_id);
                Vec::new()
            });
            slot.push(list.clone());
        }
    }
    order
        .into_iter()
        .map(|t| rrf_fuse(&by_topic[t], k_rrf))
        .collect()
}
