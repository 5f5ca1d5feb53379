//! TREC run files: `topic Q0 doc rank score tag`, one line per entry.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ranking::{RankedList, ScoredDoc};

/// Renders runs in TREC format. Every list is validated before anything is
/// produced; topics keep their input order.
pub fn format_run(lists: &[RankedList], run_tag: &str) -> Result<String> {
    if run_tag.is_empty() || run_tag.chars().any(char::is_whitespace) {
        return Err(Error::InvalidArgument(format!(
            "run tag `{run_tag}` must be a non-empty token without whitespace"
        )));
    }
    let mut seen = HashMap::new();
    for (i, l) in lists.iter().enumerate() {
        if l.topic_id.is_empty() || l.topic_id.chars().any(char::is_whitespace) {
            return Err(Error::InvalidRanking(format!(
                "bad topic id `{}`",
                l.topic_id
            )));
        }
        if seen.insert(l.topic_id.as_str(), i).is_some() {
            return Err(Error::InvalidRanking(format!(
                "topic `{}` appears twice",
                l.topic_id
            )));
        }
        l.validate()?;
        if let Some(e) = l
            .entries
            .iter()
            .find(|e| e.doc_id.is_empty() || e.doc_id.chars().any(char::is_whitespace))
        {
            return Err(Error::InvalidRanking(format!(
                "topic {}: bad doc id `{}`",
                l.topic_id, e.doc_id
            )));
        }
    }
    let mut out = String::new();
    for l in lists {
        for (i, e) in l.entries.iter().enumerate() {
            let _ = writeln!(
                out,
                "{} Q0 {} {} {:.6} {}",
                l.topic_id,
                e.doc_id,
                i + 1,
                e.score,
                run_tag
            );
        }
    }
    Ok(out)
}

/// Writes a run file and returns the number of lines written.
pub fn emit_run(lists: &[RankedList], run_tag: &str, path: &Path) -> Result<usize> {
    let text = format_run(lists, run_tag)?;
    fs::write(path, &text).map_err(|e| Error::io(path, e))?;
    Ok(lists.iter().map(RankedList::len).sum())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Validation {
    /// Ranks must be `1..n` in file order with non-increasing scores.
    #[default]
    Strict,
    /// Entries are re-sorted by score (ties by doc id) and re-ranked; for a
    /// doc listed twice the better-scored line wins.
    Lenient,
}

struct Line<'a> {
    line: usize,
    doc: &'a str,
    rank: u64,
    score: f64,
}

pub fn parse_run_str(text: &str, origin: &str, mode: Validation) -> Result<Vec<RankedList>> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<Line<'_>>> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(Error::parse(
                origin,
                line,
                format!("expected 6 columns, found {}", cols.len()),
            ));
        }
        let rank: u64 = cols[3].parse().map_err(|_| {
            Error::parse(
                origin,
                line,
                format!("rank `{}` is not a non-negative integer", cols[3]),
            )
        })?;
        let score: f64 = cols[4]
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| {
                Error::parse(
                    origin,
                    line,
                    format!("score `{}` is not a finite number", cols[4]),
                )
            })?;
        let topic = cols[0];
        groups
            .entry(topic)
            .or_insert_with(|| {
                order.push(topic);
                Vec::new()
            })
            .push(Line {
                line,
                doc: cols[2],
                rank,
                score,
            });
    }

    let mut lists = Vec::with_capacity(order.len());
    for topic in order {
        let mut lines = groups.remove(topic).expect("grouped above");
        let entries = match mode {
            Validation::Strict => {
                let mut seen = HashMap::new();
                for (i, l) in lines.iter().enumerate() {
                    if l.rank != i as u64 + 1 {
                        return Err(Error::parse(
                            origin,
                            l.line,
                            format!("topic {topic}: expected rank {}, found {}", i + 1, l.rank),
                        ));
                    }
                    if i > 0 && l.score > lines[i - 1].score {
                        return Err(Error::parse(
                            origin,
                            l.line,
                            format!("topic {topic}: score increases at rank {}", l.rank),
                        ));
                    }
                    if let Some(prev) = seen.insert(l.doc, l.line) {
                        return Err(Error::parse(
                            origin,
                            l.line,
                            format!("topic {topic}: doc {} already listed on line {prev}", l.doc),
                        ));
                    }
                }
                lines
                    .into_iter()
                    .map(|l| ScoredDoc::new(l.doc, l.score))
                    .collect()
            }
            Validation::Lenient => {
                lines.sort_by(|a, b| crate::ranking::rank_order(a.score, a.doc, b.score, b.doc));
                let mut seen = std::collections::HashSet::new();
                lines
                    .into_iter()
                    .filter(|l| seen.insert(l.doc))
                    .map(|l| ScoredDoc::new(l.doc, l.score))
                    .collect()
            }
        };
        lists.push(RankedList {
            topic_id: topic.to_string(),
            entries,
        });
    }
    Ok(lists)
}

pub fn parse_run(path: &Path) -> Result<Vec<RankedList>> {
    parse_run_with(path, Validation::Strict)
}

pub fn parse_run_with(path: &Path, mode: Validation) -> Result<Vec<RankedList>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display().to_string();
    let text = String::from_utf8(bytes).map_err(|e| {
        let line = 1 + e.as_bytes()[..e.utf8_error().valid_up_to()]
            .iter()
            .filter(|&&b| b == b'\n')
            .count();
        Error::Encoding {
            origin: origin.clone(),
            line,
        }
    })?;
    parse_run_str(&text, &origin, mode)
}
