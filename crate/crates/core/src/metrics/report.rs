use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};

use rayon::prelude::*;
use serde::Serialize;

use super::{
    average_precision, gmap, ndcg_at_k, num_rel_ret, precision_at_k, r_precision, reciprocal_rank,
    GMAP_EPSILON,
};
use crate::corpus::QrelSet;
use crate::error::{Error, Result};
use crate::ranking::RankedList;

pub const PRECISION_CUTOFFS: [usize; 3] = [5, 10, 100];
pub const NDCG_CUTOFFS: [usize; 2] = [5, 10];

/// What to do with judged topics that have no relevant document.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ZeroRelevant {
    /// Leave them out of every aggregate (trec_eval).
    #[default]
    Exclude,
    /// Evaluate them, scoring 0 on every metric.
    ScoreAsZero,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalOptions {
    pub zero_relevant: ZeroRelevant,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerQueryResult {
    pub topic_id: String,
    pub num_ret: usize,
    pub num_rel: usize,
    pub num_rel_ret: usize,
    pub ap: f64,
    pub r_prec: f64,
    pub rr: f64,
    pub p_at: BTreeMap<usize, f64>,
    pub ndcg_at: BTreeMap<usize, f64>,
}

/// Aggregate metric values, either as fractions or scaled to percentages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub map: f64,
    pub gmap: f64,
    pub r_prec: f64,
    pub mrr: f64,
    pub p_at: BTreeMap<usize, f64>,
    pub ndcg_at: BTreeMap<usize, f64>,
}

impl Summary {
    fn scaled(&self, by: f64) -> Summary {
        let scale = |m: &BTreeMap<usize, f64>| m.iter().map(|(&k, &v)| (k, v * by)).collect();
        Summary {
            map: self.map * by,
            gmap: self.gmap * by,
            r_prec: self.r_prec * by,
            mrr: self.mrr * by,
            p_at: scale(&self.p_at),
            ndcg_at: scale(&self.ndcg_at),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub per_query: Vec<PerQueryResult>,
    /// Aggregates as fractions in `[0, 1]`.
    pub summary: Summary,
    pub evaluated_topics: usize,
    pub num_ret: usize,
    pub num_rel: usize,
    pub num_rel_ret: usize,
    /// Run topics with no judgements at all; they are not scored.
    pub unjudged_topics: Vec<String>,
}

impl MetricReport {
    /// Builds a report from already computed per-query values. Aggregates
    /// are arithmetic means (geometric for GMAP) in `per_query` order.
    pub fn from_per_query(per_query: Vec<PerQueryResult>) -> Self {
        let n = per_query.len();
        let mean = |f: &dyn Fn(&PerQueryResult) -> f64| {
            if n == 0 {
                0.0
            } else {
                per_query.iter().map(f).sum::<f64>() / n as f64 + 0.0
            }
        };
        let aps: Vec<f64> = per_query.iter().map(|q| q.ap).collect();
        let summary = Summary {
            map: mean(&|q| q.ap),
            gmap: gmap(&aps, GMAP_EPSILON),
            r_prec: mean(&|q| q.r_prec),
            mrr: mean(&|q| q.rr),
            p_at: PRECISION_CUTOFFS
                .iter()
                .map(|&k| (k, mean(&|q| q.p_at.get(&k).copied().unwrap_or(0.0))))
                .collect(),
            ndcg_at: NDCG_CUTOFFS
                .iter()
                .map(|&k| (k, mean(&|q| q.ndcg_at.get(&k).copied().unwrap_or(0.0))))
                .collect(),
        };
        MetricReport {
            evaluated_topics: n,
            num_ret: per_query.iter().map(|q| q.num_ret).sum(),
            num_rel: per_query.iter().map(|q| q.num_rel).sum(),
            num_rel_ret: per_query.iter().map(|q| q.num_rel_ret).sum(),
            per_query,
            summary,
            unjudged_topics: Vec::new(),
        }
    }

    /// Aggregates ×100, as printed in result tables.
    pub fn percentages(&self) -> Summary {
        self.summary.scaled(100.0)
    }

    pub fn topic_ids(&self) -> BTreeSet<&str> {
        self.per_query.iter().map(|q| q.topic_id.as_str()).collect()
    }
}

fn evaluate_topic(ranking: &RankedList, qrels: &QrelSet) -> PerQueryResult {
    PerQueryResult {
        topic_id: ranking.topic_id.clone(),
        num_ret: ranking.len(),
        num_rel: qrels.num_relevant(&ranking.topic_id),
        num_rel_ret: num_rel_ret(ranking, qrels),
        ap: average_precision(ranking, qrels),
        r_prec: r_precision(ranking, qrels),
        rr: reciprocal_rank(ranking, qrels),
        p_at: PRECISION_CUTOFFS
            .iter()
            .map(|&k| (k, precision_at_k(ranking, qrels, k).expect("cutoff > 0")))
            .collect(),
        ndcg_at: NDCG_CUTOFFS
            .iter()
            .map(|&k| (k, ndcg_at_k(ranking, qrels, k).expect("cutoff > 0")))
            .collect(),
    }
}

/// Scores a run against the qrels. Judged topics are evaluated in ascending
/// id order; a judged topic missing from the run scores zero everywhere.
pub fn evaluate_run(
    run: &[RankedList],
    qrels: &QrelSet,
    opts: EvalOptions,
) -> Result<MetricReport> {
    if qrels.is_empty() {
        return Err(Error::InvalidArgument("qrels are empty".into()));
    }
    let mut by_topic: HashMap<&str, &RankedList> = HashMap::with_capacity(run.len());
    for list in run {
        if by_topic.insert(&list.topic_id, list).is_some() {
            return Err(Error::InvalidRanking(format!(
                "topic `{}` appears twice in the run",
                list.topic_id
            )));
        }
    }
    let topics: Vec<&str> = qrels
        .topics()
        .filter(|t| opts.zero_relevant == ZeroRelevant::ScoreAsZero || qrels.num_relevant(t) > 0)
        .collect();
    let per_query: Vec<PerQueryResult> = topics
        .par_iter()
        .map(|&t| match by_topic.get(t) {
            Some(list) => evaluate_topic(list, qrels),
            None => evaluate_topic(&RankedList::empty(t), qrels),
        })
        .collect();
    let judged: BTreeSet<&str> = qrels.topics().collect();
    let mut report = MetricReport::from_per_query(per_query);
    report.unjudged_topics = run
        .iter()
        .map(|l| l.topic_id.as_str())
        .filter(|t| !judged.contains(t))
        .map(str::to_string)
        .collect();
    Ok(report)
}

const TSV_FIELDS: [&str; 12] = [
    "topic_id",
    "num_ret",
    "num_rel",
    "num_rel_ret",
    "ap",
    "r_prec",
    "rr",
    "p_5",
    "p_10",
    "p_100",
    "ndcg_5",
    "ndcg_10",
];

/// One row per evaluated topic: `topic_id` then one column per metric.
pub fn write_per_query_tsv(report: &MetricReport) -> String {
    let mut out = TSV_FIELDS.join("\t");
    out.push('\n');
    for q in &report.per_query {
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}",
            q.topic_id, q.num_ret, q.num_rel, q.num_rel_ret
        );
        let values = [q.ap, q.r_prec, q.rr]
            .into_iter()
            .chain(PRECISION_CUTOFFS.iter().map(|k| q.p_at[k]))
            .chain(NDCG_CUTOFFS.iter().map(|k| q.ndcg_at[k]));
        for v in values {
            let _ = write!(out, "\t{v:.6}");
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub name: String,
    pub num_ret: usize,
    /// Relevant documents retrieved, summed over topics.
    pub num_rel: usize,
    pub percent: Summary,
    map: f64,
}

/// Rows sorted by MAP (descending, ties by name). Renders as a table via
/// [`fmt::Display`].
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub warnings: Vec<String>,
}

pub fn compare_runs(reports: &[MetricReport], names: &[String]) -> Result<Comparison> {
    if reports.len() != names.len() {
        return Err(Error::InvalidArgument(format!(
            "{} reports but {} names",
            reports.len(),
            names.len()
        )));
    }
    let mut warnings = Vec::new();
    if let Some(first) = reports.first() {
        let base = first.topic_ids();
        for (r, name) in reports.iter().zip(names).skip(1) {
            if r.topic_ids() != base {
                warnings.push(format!(
                    "run `{name}` was evaluated on a different topic set than `{}`",
                    names[0]
                ));
            }
        }
    }
    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .zip(names)
        .map(|(r, name)| ComparisonRow {
            name: name.clone(),
            num_ret: r.num_ret,
            num_rel: r.num_rel_ret,
            percent: r.percentages(),
            map: r.summary.map,
        })
        .collect();
    rows.sort_by(|a, b| b.map.total_cmp(&a.map).then_with(|| a.name.cmp(&b.name)));
    Ok(Comparison { rows, warnings })
}

impl Comparison {
    pub fn header() -> Vec<String> {
        let mut h: Vec<String> = ["Run", "#ret", "#rel", "MAP", "GMAP", "R-Prec", "MRR"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        h.extend(PRECISION_CUTOFFS.iter().map(|k| format!("P@{k}")));
        h.extend(NDCG_CUTOFFS.iter().map(|k| format!("nDCG@{k}")));
        h
    }

    /// Cells for each row, numbers already formatted with two decimals.
    pub fn cells(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let p = &r.percent;
                let mut row = vec![r.name.clone(), r.num_ret.to_string(), r.num_rel.to_string()];
                row.extend(
                    [p.map, p.gmap, p.r_prec, p.mrr]
                        .iter()
                        .map(|v| format!("{v:.2}")),
                );
                row.extend(
                    PRECISION_CUTOFFS
                        .iter()
                        .map(|k| format!("{:.2}", p.p_at[k])),
                );
                row.extend(NDCG_CUTOFFS.iter().map(|k| format!("{:.2}", p.ndcg_at[k])));
                row
            })
            .collect()
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let header = Self::header();
        let cells = self.cells();
        let widths: Vec<usize> = (0..header.len())
            .map(|c| {
                cells
                    .iter()
                    .map(|row| row[c].chars().count())
                    .chain(std::iter::once(header[c].len()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        for row in std::iter::once(&header).chain(cells.iter()) {
            let mut line = String::new();
            for (c, cell) in row.iter().enumerate() {
                if c == 0 {
                    let _ = write!(line, "{cell:<w$}", w = widths[0]);
                } else {
                    let _ = write!(line, "  {cell:>w$}", w = widths[c]);
                }
            }
            writeln!(f, "{}", line.trim_end())?;
        }
        Ok(())
    }
}
