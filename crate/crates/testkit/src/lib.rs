//! Brute-force reference implementations and seeded instance generators
//! shared by the humir test suites.
//!
//! Oracles work on plain slices and maps and never call into the code they
//! check, apart from building input types.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub mod oracle {
    use std::cmp::Ordering;
    use std::collections::{BTreeMap, BTreeSet, HashMap};

    fn is_rel(rel: &BTreeSet<String>, d: &str) -> bool {
        rel.contains(d)
    }

    fn hits_in_prefix(ranking: &[String], rel: &BTreeSet<String>, n: usize) -> usize {
        ranking.iter().take(n).filter(|d| is_rel(rel, d)).count()
    }

    /// Mean over relevant documents of precision at the rank where each is
    /// retrieved (0 for the unretrieved ones).
    pub fn average_precision(ranking: &[String], rel: &BTreeSet<String>) -> f64 {
        if rel.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        for r in rel {
            if let Some(pos) = ranking.iter().position(|d| d == r) {
                let i = pos + 1;
                total += hits_in_prefix(ranking, rel, i) as f64 / i as f64;
            }
        }
        total / rel.len() as f64
    }

    pub fn r_precision(ranking: &[String], rel: &BTreeSet<String>) -> f64 {
        if rel.is_empty() {
            return 0.0;
        }
        hits_in_prefix(ranking, rel, rel.len()) as f64 / rel.len() as f64
    }

    pub fn reciprocal_rank(ranking: &[String], rel: &BTreeSet<String>) -> f64 {
        for (i, d) in ranking.iter().enumerate() {
            if is_rel(rel, d) {
                return 1.0 / (i + 1) as f64;
            }
        }
        0.0
    }

    pub fn precision_at(ranking: &[String], rel: &BTreeSet<String>, k: usize) -> f64 {
        hits_in_prefix(ranking, rel, k) as f64 / k as f64
    }

    pub fn ndcg_at(ranking: &[String], rel: &BTreeSet<String>, k: usize) -> f64 {
        if rel.is_empty() {
            return 0.0;
        }
        let mut dcg = 0.0;
        for i in 1..=k.min(ranking.len()) {
            if is_rel(rel, &ranking[i - 1]) {
                dcg += 1.0 / (i as f64 + 1.0).log2();
            }
        }
        let mut ideal = 0.0;
        for i in 1..=k.min(rel.len()) {
            ideal += 1.0 / (i as f64 + 1.0).log2();
        }
        dcg / ideal
    }

    /// n-th root of the product of `max(ap, eps)`.
    pub fn gmap(aps: &[f64], eps: f64) -> f64 {
        if aps.is_empty() {
            return 0.0;
        }
        aps.iter()
            .map(|&a| a.max(eps).powf(1.0 / aps.len() as f64))
            .product()
    }

    #[derive(Debug, Clone, PartialEq)]
    pub struct TopicScores {
        pub ap: f64,
        pub r_prec: f64,
        pub rr: f64,
        pub p_5: f64,
        pub p_10: f64,
        pub p_100: f64,
        pub ndcg_5: f64,
        pub ndcg_10: f64,
        pub num_ret: usize,
        pub num_rel: usize,
        pub num_rel_ret: usize,
    }

    pub fn topic_scores(ranking: &[String], rel: &BTreeSet<String>) -> TopicScores {
        TopicScores {
            ap: average_precision(ranking, rel),
            r_prec: r_precision(ranking, rel),
            rr: reciprocal_rank(ranking, rel),
            p_5: precision_at(ranking, rel, 5),
            p_10: precision_at(ranking, rel, 10),
            p_100: precision_at(ranking, rel, 100),
            ndcg_5: ndcg_at(ranking, rel, 5),
            ndcg_10: ndcg_at(ranking, rel, 10),
            num_ret: ranking.len(),
            num_rel: rel.len(),
            num_rel_ret: hits_in_prefix(ranking, rel, ranking.len()),
        }
    }

    /// Per-topic scores for every judged topic (those with at least one
    /// relevant document unless `keep_zero_rel`), ascending by topic id.
    pub fn evaluate(
        run: &BTreeMap<String, Vec<String>>,
        judged: &BTreeMap<String, BTreeSet<String>>,
        keep_zero_rel: bool,
    ) -> Vec<(String, TopicScores)> {
        let empty = Vec::new();
        judged
            .iter()
            .filter(|(_, rel)| keep_zero_rel || !rel.is_empty())
            .map(|(t, rel)| (t.clone(), topic_scores(run.get(t).unwrap_or(&empty), rel)))
            .collect()
    }

    pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
        let mut ab = 0.0f64;
        let mut aa = 0.0f64;
        let mut bb = 0.0f64;
        for i in 0..a.len() {
            let (x, y) = (a[i] as f64, b[i] as f64);
            ab += x * y;
            aa += x * x;
            bb += y * y;
        }
        ab / (aa.sqrt() * bb.sqrt())
    }

    /// Scores every row, sorts the full list (score descending, then id) and
    /// keeps the first `k`.
    pub fn dense_full_sort(
        query: &[f32],
        rows: &[(String, Vec<f32>)],
        k: usize,
    ) -> Vec<(String, f64)> {
        let mut all: Vec<(String, f64)> = rows
            .iter()
            .map(|(id, v)| (id.clone(), cosine(query, v)))
            .collect();
        all.sort_by(|a, b| match b.1.partial_cmp(&a.1).unwrap() {
            Ordering::Equal => a.0.cmp(&b.0),
            o => o,
        });
        all.truncate(k);
        all
    }

    pub fn tokens(text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = String::new();
        for c in text.chars() {
            if c.is_alphanumeric() {
                cur.extend(c.to_lowercase());
            } else if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
        out
    }

    /// BM25 of `query` against every text, straight from the formula with
    /// `idf = ln(1 + (N - df + 0.5) / (df + 0.5))`. Repeated query terms
    /// count once per occurrence.
    pub fn bm25_direct(texts: &[&str], query: &str, k1: f64, b: f64) -> Vec<f64> {
        let docs: Vec<Vec<String>> = texts.iter().map(|t| tokens(t)).collect();
        let n = docs.len() as f64;
        let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
        let q = tokens(query);
        let mut df: HashMap<&str, f64> = HashMap::new();
        for t in &q {
            let c = docs.iter().filter(|d| d.iter().any(|w| w == t)).count();
            df.insert(t, c as f64);
        }
        docs.iter()
            .map(|d| {
                let dl = d.len() as f64;
                q.iter()
                    .map(|t| {
                        let f = d.iter().filter(|w| *w == t).count() as f64;
                        if f == 0.0 {
                            return 0.0;
                        }
                        let idf = (1.0 + (n - df[t.as_str()] + 0.5) / (df[t.as_str()] + 0.5)).ln();
                        idf * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * dl / avgdl))
                    })
                    .sum()
            })
            .collect()
    }
}

pub mod gen {
    use std::collections::{BTreeMap, BTreeSet};

    use humir_core::corpus::{Document, QrelSet};
    use humir_core::{RankedList, ScoredDoc};
    use rand::seq::SliceRandom;
    use rand::RngExt;

    use crate::TestRng;

    /// Random binary qrels plus one run over the same document pool.
    #[derive(Debug, Clone)]
    pub struct MiniCollection {
        pub qrels: QrelSet,
        pub relevant: BTreeMap<String, BTreeSet<String>>,
        pub run: Vec<RankedList>,
        pub run_docs: BTreeMap<String, Vec<String>>,
    }

    /// Up to `max_docs` documents and `max_topics` topics. Some topics have no
    /// relevant documents, some are missing from the run, and the run may
    /// carry topics that are not judged. Scores repeat to create ties.
    pub fn mini_collection(
        rng: &mut TestRng,
        max_docs: usize,
        max_topics: usize,
    ) -> MiniCollection {
        let n_docs = rng.random_range(1..=max_docs);
        let n_topics = rng.random_range(1..=max_topics);
        let docs: Vec<String> = (0..n_docs).map(|i| format!("d{i:02}")).collect();
        let mut qrels = QrelSet::new();
        let mut relevant = BTreeMap::new();
        let mut run = Vec::new();
        let mut run_docs = BTreeMap::new();
        for t in 0..n_topics {
            let topic = format!("q{t}");
            let p_rel = rng.random_range(0.0..0.6);
            let mut rel = BTreeSet::new();
            if rng.random_bool(0.9) {
                for d in &docs {
                    if rng.random_bool(0.6) {
                        let label = i64::from(rng.random_bool(p_rel));
                        qrels.insert(&topic, d, label).unwrap();
                        if label > 0 {
                            rel.insert(d.clone());
                        }
                    }
                }
                relevant.insert(topic.clone(), rel);
            }
            if rng.random_bool(0.85) {
                let mut pool = docs.clone();
                pool.shuffle(rng);
                pool.truncate(rng.random_range(0..=n_docs));
                let entries: Vec<ScoredDoc> = pool
                    .iter()
                    .map(|d| ScoredDoc::new(d.clone(), f64::from(rng.random_range(0..8u8)) / 4.0))
                    .collect();
                let list = RankedList::from_unsorted(topic.clone(), entries).unwrap();
                run_docs.insert(topic.clone(), list.doc_ids().map(str::to_string).collect());
                run.push(list);
            }
        }
        if qrels.is_empty() {
            qrels.insert("q0", &docs[0], 1).unwrap();
            relevant.insert("q0".into(), BTreeSet::from([docs[0].clone()]));
        }
        relevant.retain(|t, _| qrels.topics().any(|q| q == t));
        run.shuffle(rng);
        MiniCollection {
            qrels,
            relevant,
            run,
            run_docs,
        }
    }

    /// `n` rows of dimension `dim` with small integer components. About
    /// `dup` of the rows copy an earlier row, so exact ties are common.
    pub fn matrix(rng: &mut TestRng, n: usize, dim: usize, dup: f64) -> Vec<(String, Vec<f32>)> {
        let mut rows: Vec<(String, Vec<f32>)> = Vec::with_capacity(n);
        let mut ids: Vec<String> = (0..n).map(|i| format!("doc{i:03}")).collect();
        ids.shuffle(rng);
        for id in ids {
            let v = if !rows.is_empty() && rng.random_bool(dup) {
                rows[rng.random_range(0..rows.len())].1.clone()
            } else {
                nonzero_vector(rng, dim)
            };
            rows.push((id, v));
        }
        rows
    }

    pub fn nonzero_vector(rng: &mut TestRng, dim: usize) -> Vec<f32> {
        loop {
            let v: Vec<f32> = (0..dim)
                .map(|_| f32::from(rng.random_range(-4i8..=4)))
                .collect();
            if v.iter().any(|&x| x != 0.0) {
                return v;
            }
        }
    }

    const VOCAB: [&str; 12] = [
        "pun", "joke", "chicken", "road", "bar", "horse", "knock", "who", "there", "cat", "dog",
        "why",
    ];

    pub fn text(rng: &mut TestRng, max_len: usize) -> String {
        let n = rng.random_range(1..=max_len);
        (0..n)
            .map(|_| VOCAB[rng.random_range(0..VOCAB.len())])
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn corpus(rng: &mut TestRng, max_docs: usize) -> Vec<Document> {
        let n = rng.random_range(1..=max_docs);
        (0..n)
            .map(|i| Document {
                doc_id: format!("d{i}"),
                text: text(rng, 12),
                meta: Default::default(),
            })
            .collect()
    }

    /// A first-stage list of up to `max` candidates and one scorer output per
    /// candidate, drawn from few distinct values so ties are frequent.
    pub fn candidates(rng: &mut TestRng, max: usize) -> (RankedList, BTreeMap<String, f64>) {
        let n = rng.random_range(1..=max);
        let entries: Vec<ScoredDoc> = (0..n)
            .map(|i| ScoredDoc::new(format!("c{i:03}"), rng.random_range(-100.0..100.0)))
            .collect();
        let list = RankedList::from_unsorted("t", entries).unwrap();
        let scores = list
            .doc_ids()
            .map(|d| (d.to_string(), f64::from(rng.random_range(-3i8..=3)) * 0.5))
            .collect();
        (list, scores)
    }
}
