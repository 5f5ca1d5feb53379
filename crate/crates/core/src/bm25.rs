//! Lexical baseline: tokenizer, inverted index and Okapi BM25.
//!
//! ```text
//! score(q, d) = Σ_{t ∈ q} idf(t) · f(t,d)·(k1+1) / (f(t,d) + k1·(1 − b + b·|d|/avgdl))
//! idf(t)      = ln(1 + (N − df(t) + 0.5) / (df(t) + 0.5))
//! ```
//!
//! Repeated query terms are summed once per occurrence. The idf is always
//! positive, so a document scores above zero exactly when it shares a term
//! with the query.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Topic};
use crate::error::{Error, Result};
use crate::ranking::{top_k, RankedList, ScoredDoc};

const INDEX_MAGIC: &str = "humir-bm25";
const INDEX_VERSION: u32 = 1;

/// Lowercases and splits on every non-alphanumeric codepoint. No stemming,
/// no stopwords.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.5, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self> {
        if !(k1 > 0.0 && k1.is_finite()) {
            return Err(Error::InvalidArgument(format!("k1 must be > 0, got {k1}")));
        }
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::InvalidArgument(format!(
                "b must be in [0, 1], got {b}"
            )));
        }
        Ok(Self { k1, b })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc_row: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: Vec<u32>,
    doc_ids: Vec<String>,
    avgdl: f64,
}

impl InvertedIndex {
    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_id(&self, row: usize) -> &str {
        &self.doc_ids[row]
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_length(&self, row: usize) -> u32 {
        self.doc_lengths[row]
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn num_terms(&self) -> usize {
        self.postings.len()
    }

    pub fn term_freq(&self, term: &str, row: usize) -> u32 {
        let p = self.postings(term);
        p.binary_search_by_key(&(row as u32), |x| x.doc_row)
            .map_or(0, |i| p[i].tf)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.num_docs() as f64;
        let df = self.doc_freq(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, params: &Bm25Params, idf: f64, tf: u32, row: usize) -> f64 {
        let f = f64::from(tf);
        let len_norm = 1.0 - params.b + params.b * f64::from(self.doc_lengths[row]) / self.avgdl;
        idf * f * (params.k1 + 1.0) / (f + params.k1 * len_norm)
    }

    /// Writes the index behind a `humir-bm25 <version>` header line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "{INDEX_MAGIC} {INDEX_VERSION}").map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(&mut w, self).map_err(|e| Error::io(path, e.into()))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut header = String::new();
        r.read_line(&mut header).map_err(|e| Error::io(path, e))?;
        let origin = path.display().to_string();
        match header.trim_end().split_once(' ') {
            Some((INDEX_MAGIC, v)) if v == INDEX_VERSION.to_string() => {}
            Some((INDEX_MAGIC, v)) => {
                return Err(Error::parse(
                    origin,
                    1,
                    format!("unsupported index version {v}"),
                ))
            }
            _ => return Err(Error::parse(origin, 1, "not a BM25 index file")),
        }
        let idx: InvertedIndex =
            serde_json::from_reader(r).map_err(|e| Error::parse(&origin, 2, e.to_string()))?;
        if idx.doc_lengths.len() != idx.doc_ids.len() {
            return Err(Error::parse(origin, 2, "document table length mismatch"));
        }
        Ok(idx)
    }
}

pub fn build_index(docs: &[Document]) -> InvertedIndex {
    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut doc_lengths = Vec::with_capacity(docs.len());
    let mut doc_ids = Vec::with_capacity(docs.len());
    for (row, doc) in docs.iter().enumerate() {
        let tokens = tokenize(&doc.text);
        doc_lengths.push(tokens.len() as u32);
        doc_ids.push(doc.doc_id.clone());
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        for t in tokens {
            *counts.entry(t).or_default() += 1;
        }
        for (term, tf) in counts {
            postings.entry(term).or_default().push(Posting {
                doc_row: row as u32,
                tf,
            });
        }
    }
    let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
    let avgdl = if docs.is_empty() {
        0.0
    } else {
        total as f64 / docs.len() as f64
    };
    InvertedIndex {
        postings,
        doc_lengths,
        doc_ids,
        avgdl,
    }
}

/// BM25 score of one document for a tokenized query.
pub fn bm25_score(
    idx: &InvertedIndex,
    params: &Bm25Params,
    topic_tokens: &[String],
    doc_row: usize,
) -> f64 {
    assert!(doc_row < idx.num_docs(), "doc_row {doc_row} out of range");
    topic_tokens
        .iter()
        .map(|t| match idx.term_freq(t, doc_row) {
            0 => 0.0,
            tf => idx.term_weight(params, idx.idf(t), tf, doc_row),
        })
        .sum::<f64>()
        + 0.0
}

/// Scores all documents through the postings lists. Each query occurrence
/// adds its contribution in query order, matching [`bm25_score`].
fn accumulate(idx: &InvertedIndex, params: &Bm25Params, tokens: &[String]) -> Vec<(usize, f64)> {
    let mut acc = vec![0.0f64; idx.num_docs()];
    let mut touched = vec![false; idx.num_docs()];
    for t in tokens {
        let idf = idx.idf(t);
        for p in idx.postings(t) {
            let row = p.doc_row as usize;
            acc[row] += idx.term_weight(params, idf, p.tf, row);
            touched[row] = true;
        }
    }
    acc.into_iter()
        .enumerate()
        .filter(|&(r, s)| touched[r] && s > 0.0)
        .collect()
}

/// Ranks documents for `topic`; documents scoring zero are left out.
pub fn retrieve_bm25(
    idx: &InvertedIndex,
    params: &Bm25Params,
    topic: &Topic,
    k: usize,
) -> Result<RankedList> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let tokens = tokenize(&topic.text);
    let scored = accumulate(idx, params, &tokens);
    let entries = top_k(scored, k, |r| idx.doc_id(r))
        .into_iter()
        .map(|(r, s)| ScoredDoc::new(idx.doc_id(r), s))
        .collect();
    Ok(RankedList {
        topic_id: topic.topic_id.clone(),
        entries,
    })
}

/// [`retrieve_bm25`] for every topic, in parallel; output follows `topics`.
pub fn retrieve_bm25_batch(
    idx: &InvertedIndex,
    params: &Bm25Params,
    topics: &[Topic],
    k: usize,
) -> Result<Vec<RankedList>> {
    topics
        .par_iter()
        .map(|t| retrieve_bm25(idx, params, t, k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, text: &str) -> Document {
        Document {
            doc_id: id.into(),
            text: text.into(),
            meta: Default::default(),
        }
    }

    fn worked() -> Vec<Document> {
        vec![
            doc("d1", "cat sat mat"),
            doc("d2", "cat cat runs"),
            doc("d3", "dog barks"),
        ]
    }

    fn topic(text: &str) -> Topic {
        Topic {
            topic_id: "q".into(),
            text: text.into(),
        }
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("Why did the chicken?"),
            ["why", "did", "the", "chicken"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("e-mail É"), ["e", "mail", "é"]);
    }

    #[test]
    fn worked_index_stats() {
        let idx = build_index(&worked());
        assert_eq!(idx.num_docs(), 3);
        assert!((idx.avgdl() - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(idx.doc_freq("cat"), 2);
        assert_eq!(idx.term_freq("cat", 1), 2);
        assert_eq!(idx.term_freq("cat", 2), 0);
    }

    #[test]
    fn empty_and_single() {
        let idx = build_index(&[]);
        assert_eq!(idx.num_docs(), 0);
        assert!(
            retrieve_bm25(&idx, &Bm25Params::default(), &topic("cat"), 5)
                .unwrap()
                .is_empty()
        );
        let one = build_index(&[doc("x", "a b c d")]);
        assert_eq!(one.avgdl(), 4.0);
    }

    #[test]
    fn worked_query_cat() {
        let idx = build_index(&worked());
        let p = Bm25Params::default();
        let q = tokenize("cat");
        let s: Vec<f64> = (0..3).map(|r| bm25_score(&idx, &p, &q, r)).collect();
        assert!(s[1] > s[0] && s[0] > 0.0);
        assert_eq!(s[2], 0.0);
        assert!(s[2].is_sign_positive());
        let l = retrieve_bm25(&idx, &p, &topic("cat"), 10).unwrap();
        assert_eq!(l.doc_ids().collect::<Vec<_>>(), ["d2", "d1"]);
        let top1 = retrieve_bm25(&idx, &p, &topic("cat"), 1).unwrap();
        assert_eq!(top1.entries[..], l.entries[..1]);
    }

    #[test]
    fn absent_term_scores_zero() {
        let idx = build_index(&worked());
        assert_eq!(
            bm25_score(&idx, &Bm25Params::default(), &tokenize("zzz"), 0),
            0.0
        );
        assert!(
            retrieve_bm25(&idx, &Bm25Params::default(), &topic("zzz"), 10)
                .unwrap()
                .is_empty()
        );
    }

    #[test]
    fn b_zero_ignores_length() {
        let idx = build_index(&[doc("short", "pun"), doc("long", "pun a b c d e f g")]);
        let p = Bm25Params::new(1.5, 0.0).unwrap();
        let q = tokenize("pun");
        assert_eq!(bm25_score(&idx, &p, &q, 0), bm25_score(&idx, &p, &q, 1));
    }

    #[test]
    fn repeated_query_terms_add_up() {
        let idx = build_index(&worked());
        let p = Bm25Params::default();
        let once = bm25_score(&idx, &p, &tokenize("cat"), 1);
        let twice = bm25_score(&idx, &p, &tokenize("cat cat"), 1);
        assert!((twice - 2.0 * once).abs() < 1e-12);
    }

    #[test]
    fn params_validated() {
        assert!(Bm25Params::new(0.0, 0.5).is_err());
        assert!(Bm25Params::new(1.2, 1.5).is_err());
        assert!(Bm25Params::new(1.2, 1.0).is_ok());
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx.bm25");
        let idx = build_index(&worked());
        idx.save(&path).unwrap();
        assert!(fs::read_to_string(&path)
            .unwrap()
            .starts_with("humir-bm25 1\n"));
        assert_eq!(InvertedIndex::load(&path).unwrap(), idx);

        fs::write(&path, "humir-bm25 99\n{}").unwrap();
        assert!(InvertedIndex::load(&path).is_err());
        fs::write(&path, "garbage\n").unwrap();
        assert!(InvertedIndex::load(&path).is_err());
    }
}
