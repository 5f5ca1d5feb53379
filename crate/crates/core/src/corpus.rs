//! Collection data model: documents, topics and relevance judgements.
//!
//! Exchange formats:
//!
//! * TSV: `id<TAB>text`. Only the first tab separates the id; later tabs
//!   belong to the text.
//! * JSONL: one object per line, `{"id": ..., "text": ..., "meta": {...}}`
//!   with `meta` optional.
//! * Qrels: TREC four-column `topic iter doc rel`, whitespace separated.
//!
//! Input must be valid UTF-8. Blank lines are skipped everywhere.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    pub meta: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topic {
    pub topic_id: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextFormat {
    Tsv,
    Jsonl,
}

impl TextFormat {
    /// `.jsonl` / `.json` select JSONL, anything else TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => TextFormat::Jsonl,
            _ => TextFormat::Tsv,
        }
    }
}

impl FromStr for TextFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(TextFormat::Tsv),
            "jsonl" => Ok(TextFormat::Jsonl),
            other => Err(Error::InvalidArgument(format!(
                "unknown text format `{other}` (expected tsv or jsonl)"
            ))),
        }
    }
}

#[derive(Deserialize)]
struct JsonRecord {
    id: String,
    text: String,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct JsonRecordRef<'a> {
    id: &'a str,
    text: &'a str,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    meta: &'a BTreeMap<String, String>,
}

/// A parsed `(id, text, meta)` record with the line it came from.
struct Record {
    line: usize,
    id: String,
    text: String,
    meta: BTreeMap<String, String>,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Non-blank lines with their 1-based line numbers. A trailing `\r` is
/// dropped so CRLF files parse the same as LF files.
fn lines<'a>(
    bytes: &'a [u8],
    origin: &'a str,
) -> impl Iterator<Item = Result<(usize, &'a str)>> + 'a {
    bytes
        .split(|&b| b == b'\n')
        .enumerate()
        .filter_map(move |(i, raw)| {
            let line = i + 1;
            let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
            match std::str::from_utf8(raw) {
                Err(_) => Some(Err(Error::Encoding {
                    origin: origin.to_string(),
                    line,
                })),
                Ok(s) if s.trim().is_empty() => None,
                Ok(s) => Some(Ok((line, s))),
            }
        })
}

fn check_id(id: &str, origin: &str, line: usize) -> Result<()> {
    if id.is_empty() {
        return Err(Error::parse(origin, line, "empty id"));
    }
    if id.chars().any(char::is_whitespace) {
        return Err(Error::parse(
            origin,
            line,
            format!("id `{id}` contains whitespace"),
        ));
    }
    Ok(())
}

fn parse_records(bytes: &[u8], format: TextFormat, origin: &str) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for item in lines(bytes, origin) {
        let (line, s) = item?;
        let rec = match format {
            TextFormat::Tsv => {
                let (id, text) = s
                    .split_once('\t')
                    .ok_or_else(|| Error::parse(origin, line, "expected `id<TAB>text`"))?;
                Record {
                    line,
                    id: id.to_string(),
                    text: text.to_string(),
                    meta: BTreeMap::new(),
                }
            }
            TextFormat::Jsonl => {
                let r: JsonRecord = serde_json::from_str(s)
                    .map_err(|e| Error::parse(origin, line, e.to_string()))?;
                Record {
                    line,
                    id: r.id,
                    text: r.text,
                    meta: r.meta,
                }
            }
        };
        check_id(&rec.id, origin, line)?;
        out.push(rec);
    }
    Ok(out)
}

fn check_unique<'a>(kind: &'static str, ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateId {
                kind,
                id: id.to_string(),
            });
        }
    }
    Ok(())
}

/// Parses documents from an in-memory buffer. `origin` only labels errors.
pub fn parse_corpus(bytes: &[u8], format: TextFormat, origin: &str) -> Result<Vec<Document>> {
    let records = parse_records(bytes, format, origin)?;
    check_unique("document", records.iter().map(|r| r.id.as_str()))?;
    records
        .into_iter()
        .map(|r| {
            if r.text.is_empty() {
                return Err(Error::parse(
                    origin,
                    r.line,
                    format!("document `{}` has empty text", r.id),
                ));
            }
            Ok(Document {
                doc_id: r.id,
                text: r.text,
                meta: r.meta,
            })
        })
        .collect()
}

pub fn load_corpus(path: &Path, format: TextFormat) -> Result<Vec<Document>> {
    let bytes = read_bytes(path)?;
    parse_corpus(&bytes, format, &path.display().to_string())
}

pub fn parse_topics(bytes: &[u8], format: TextFormat, origin: &str) -> Result<Vec<Topic>> {
    let records = parse_records(bytes, format, origin)?;
    check_unique("topic", records.iter().map(|r| r.id.as_str()))?;
    Ok(records
        .into_iter()
        .map(|r| Topic {
            topic_id: r.id,
            text: r.text,
        })
        .collect())
}

/// Loads topics; the format follows the file extension (see [`TextFormat::from_path`]).
pub fn load_topics(path: &Path) -> Result<Vec<Topic>> {
    let bytes = read_bytes(path)?;
    parse_topics(
        &bytes,
        TextFormat::from_path(path),
        &path.display().to_string(),
    )
}

pub fn write_documents(docs: &[Document], format: TextFormat) -> Result<String> {
    let mut out = String::new();
    for d in docs {
        match format {
            TextFormat::Tsv => {
                if d.text.contains('\n') {
                    return Err(Error::InvalidArgument(format!(
                        "document `{}` contains a newline and cannot be written as TSV",
                        d.doc_id
                    )));
                }
                let _ = writeln!(out, "{}\t{}", d.doc_id, d.text);
            }
            TextFormat::Jsonl => {
                let rec = JsonRecordRef {
                    id: &d.doc_id,
                    text: &d.text,
                    meta: &d.meta,
                };
                out.push_str(&serde_json::to_string(&rec).expect("string map serialises"));
                out.push('\n');
            }
        }
    }
    Ok(out)
}

pub fn write_topics(topics: &[Topic], format: TextFormat) -> Result<String> {
    let docs: Vec<Document> = topics
        .iter()
        .map(|t| Document {
            doc_id: t.topic_id.clone(),
            text: t.text.clone(),
            meta: BTreeMap::new(),
        })
        .collect();
    write_documents(&docs, format)
}

/// Binary relevance judgements keyed by topic, then document.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QrelSet {
    judgements: BTreeMap<String, BTreeMap<String, u8>>,
}

impl QrelSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a judgement, binarising `rel` (> 0 is relevant). Re-inserting
    /// the same pair is accepted only if the binarised label agrees.
    pub fn insert(&mut self, topic_id: &str, doc_id: &str, rel: i64) -> Result<()> {
        let label = u8::from(rel > 0);
        let docs = self.judgements.entry(topic_id.to_string()).or_default();
        match docs.entry(doc_id.to_string()) {
            Entry::Vacant(v) => {
                v.insert(label);
                Ok(())
            }
            Entry::Occupied(o) if *o.get() == label => Ok(()),
            Entry::Occupied(o) => Err(Error::InvalidArgument(format!(
                "conflicting judgements for ({topic_id}, {doc_id}): {} vs {label}",
                o.get()
            ))),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.judgements.is_empty()
    }

    /// Topics in ascending id order.
    pub fn topics(&self) -> impl Iterator<Item = &str> {
        self.judgements.keys().map(String::as_str)
    }

    pub fn label(&self, topic_id: &str, doc_id: &str) -> Option<u8> {
        self.judgements.get(topic_id)?.get(doc_id).copied()
    }

    pub fn is_relevant(&self, topic_id: &str, doc_id: &str) -> bool {
        self.label(topic_id, doc_id) == Some(1)
    }

    pub fn num_relevant(&self, topic_id: &str) -> usize {
        self.judgements
            .get(topic_id)
            .map_or(0, |docs| docs.values().filter(|&&l| l == 1).count())
    }

    pub fn relevant_docs<'a>(&'a self, topic_id: &str) -> impl Iterator<Item = &'a str> + 'a {
        self.judgements.get(topic_id).into_iter().flat_map(|docs| {
            docs.iter()
                .filter(|(_, &l)| l == 1)
                .map(|(d, _)| d.as_str())
        })
    }

    /// All `(topic, doc, label)` triples in sorted order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u8)> {
        self.judgements
            .iter()
            .flat_map(|(t, docs)| docs.iter().map(move |(d, &l)| (t.as_str(), d.as_str(), l)))
    }

    pub fn len(&self) -> usize {
        self.judgements.values().map(BTreeMap::len).sum()
    }
}

pub fn parse_qrels(bytes: &[u8], origin: &str) -> Result<QrelSet> {
    let mut qrels = QrelSet::new();
    for item in lines(bytes, origin) {
        let (line, s) = item?;
        let cols: Vec<&str> = s.split_whitespace().collect();
        if cols.len() != 4 {
            return Err(Error::parse(
                origin,
                line,
                format!(
                    "expected 4 columns `topic iter doc rel`, found {}",
                    cols.len()
                ),
            ));
        }
        let rel: i64 = cols[3].parse().map_err(|_| {
            Error::parse(
                origin,
                line,
                format!("relevance `{}` is not an integer", cols[3]),
            )
        })?;
        qrels
            .insert(cols[0], cols[2], rel)
            .map_err(|e| Error::parse(origin, line, e.to_string()))?;
    }
    Ok(qrels)
}

pub fn load_qrels(path: &Path) -> Result<QrelSet> {
    let bytes = read_bytes(path)?;
    parse_qrels(&bytes, &path.display().to_string())
}
