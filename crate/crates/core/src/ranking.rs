//! Scored rankings shared by every retrieval stage.
//!
//! All rankings use the same total order: score descending, then doc id
//! ascending. Scores are always finite.

use std::cmp::Ordering;
use std::collections::HashSet;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

impl ScoredDoc {
    pub fn new(doc_id: impl Into<String>, score: f64) -> Self {
        Self {
            doc_id: doc_id.into(),
            score,
        }
    }
}

/// Ordering used for every ranked list: higher score first, ties by id.
pub fn rank_order(a_score: f64, a_id: &str, b_score: f64, b_id: &str) -> Ordering {
    b_score
        .partial_cmp(&a_score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a_id.cmp(b_id))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedList {
    pub topic_id: String,
    pub entries: Vec<ScoredDoc>,
}

impl RankedList {
    pub fn empty(topic_id: impl Into<String>) -> Self {
        Self {
            topic_id: topic_id.into(),
            entries: Vec::new(),
        }
    }

    /// Sorts `entries` into rank order and validates the result.
    pub fn from_unsorted(topic_id: impl Into<String>, mut entries: Vec<ScoredDoc>) -> Result<Self> {
        entries.sort_by(|a, b| rank_order(a.score, &a.doc_id, b.score, &b.doc_id));
        let list = Self {
            topic_id: topic_id.into(),
            entries,
        };
        list.validate_canonical()?;
        Ok(list)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.doc_id.as_str())
    }

    /// Keeps the first `k` entries.
    pub fn truncate(&mut self, k: usize) {
        self.entries.truncate(k);
    }

    /// Checks finite scores, unique ids and non-increasing scores. Tied
    /// scores may appear in any id order; see [`RankedList::validate_canonical`].
    pub fn validate(&self) -> Result<()> {
        self.check(false)
    }

    /// Like [`RankedList::validate`], and additionally requires ties to be
    /// ordered by ascending doc id.
    pub fn validate_canonical(&self) -> Result<()> {
        self.check(true)
    }

    fn check(&self, canonical: bool) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.entries.len());
        for (i, e) in self.entries.iter().enumerate() {
            if !e.score.is_finite() {
                return Err(Error::InvalidRanking(format!(
                    "topic {}: non-finite score for `{}`",
                    self.topic_id, e.doc_id
                )));
            }
            if !seen.insert(e.doc_id.as_str()) {
                return Err(Error::InvalidRanking(format!(
                    "topic {}: duplicate doc `{}`",
                    self.topic_id, e.doc_id
                )));
            }
            if i > 0 {
                let prev = &self.entries[i - 1];
                let inverted = if canonical {
                    rank_order(prev.score, &prev.doc_id, e.score, &e.doc_id) == Ordering::Greater
                } else {
                    e.score > prev.score
                };
                if inverted {
                    return Err(Error::InvalidRanking(format!(
                        "topic {}: `{}` at rank {} is out of order",
                        self.topic_id,
                        e.doc_id,
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Picks the best `k` of `(row, score)` candidates and returns them in rank
/// order. `id_of` maps a row to its doc id for tie-breaking.
pub(crate) fn top_k<'a>(
    mut scored: Vec<(usize, f64)>,
    k: usize,
    id_of: impl Fn(usize) -> &'a str,
) -> Vec<(usize, f64)> {
    let cmp = |a: &(usize, f64), b: &(usize, f64)| rank_order(a.1, id_of(a.0), b.1, id_of(b.0));
    if k == 0 {
        return Vec::new();
    }
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_by(cmp);
    scored
}
