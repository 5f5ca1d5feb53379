//! Exact cosine-similarity retrieval over an [`EmbeddingMatrix`].
//!
//! Products are accumulated in `f64` over the `f32` inputs. On stores
//! flagged normalized the document norm is taken as 1, so each score is a
//! dot product divided by the query norm.

use rayon::prelude::*;
use tracing::debug;

use crate::error::{Error, Result};
use crate::ranking::{top_k, RankedList, ScoredDoc};
use crate::store::{l2_norm, EmbeddingMatrix};

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

/// `a·b / (‖a‖‖b‖)`, clamped to `[-1, 1]`.
pub fn cosine_sim(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            id: "<b>".into(),
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 {
        return Err(Error::ZeroNorm("<a>".into()));
    }
    if nb == 0.0 {
        return Err(Error::ZeroNorm("<b>".into()));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Per-document norms: all ones on a normalized store, computed otherwise.
fn doc_norms(docs: &EmbeddingMatrix) -> Result<Vec<f64>> {
    if docs.is_normalized() {
        return Ok(vec![1.0; docs.len()]);
    }
    docs.iter()
        .map(|(id, row)| {
            let n = l2_norm(row);
            if n == 0.0 {
                Err(Error::ZeroNorm(id.to_string()))
            } else {
                Ok(n)
            }
        })
        .collect()
}

fn score_one(
    topic_id: &str,
    query: &[f32],
    docs: &EmbeddingMatrix,
    norms: &[f64],
    k: usize,
) -> Result<RankedList> {
    if query.len() != docs.dim() {
        return Err(Error::DimensionMismatch {
            id: topic_id.to_string(),
            expected: docs.dim(),
            actual: query.len(),
        });
    }
    if docs.is_empty() {
        return Ok(RankedList::empty(topic_id));
    }
    let qn = l2_norm(query);
    if qn == 0.0 {
        return Err(Error::ZeroNorm(topic_id.to_string()));
    }
    let scored: Vec<(usize, f64)> = (0..docs.len())
        .map(|r| {
            let s = (dot(query, docs.row(r)) / (qn * norms[r])).clamp(-1.0, 1.0);
            // Fold -0.0 into 0.0 so printed scores never carry a sign on zero.
            (r, s + 0.0)
        })
        .collect();
    let entries = top_k(scored, k, |r| docs.id(r))
        .into_iter()
        .map(|(r, s)| ScoredDoc::new(docs.id(r), s))
        .collect();
    Ok(RankedList {
        topic_id: topic_id.to_string(),
        entries,
    })
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    Ok(())
}

/// Top-`k` documents for one query vector, by cosine similarity.
pub fn retrieve_dense(
    topic_id: &str,
    topic_vec: &[f32],
    docs: &EmbeddingMatrix,
    k: usize,
) -> Result<RankedList> {
    check_k(k)?;
    let norms = doc_norms(docs)?;
    score_one(topic_id, topic_vec, docs, &norms, k)
}

/// Scores every topic row against `docs`, in parallel across topics. Each
/// list is identical to what [`retrieve_dense`] returns for that row.
pub fn retrieve_dense_batch(
    topics: &EmbeddingMatrix,
    docs: &EmbeddingMatrix,
    k: usize,
) -> Result<Vec<RankedList>> {
    check_k(k)?;
    if topics.is_empty() {
        return Ok(Vec::new());
    }
    if topics.dim() != docs.dim() {
        return Err(Error::DimensionMismatch {
            id: topics.id(0).to_string(),
            expected: docs.dim(),
            actual: topics.dim(),
        });
    }
    let norms = doc_norms(docs)?;
    debug!(topics = topics.len(), docs = docs.len(), k, "dense batch");
    (0..topics.len())
        .into_par_iter()
        .map(|t| score_one(topics.id(t), topics.row(t), docs, &norms, k))
        .collect()
}
