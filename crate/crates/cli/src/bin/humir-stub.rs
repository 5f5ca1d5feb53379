//! Deterministic stand-ins for the encoder bridge and the pair scorer.
//!
//! `humir-stub embed` answers the bridge protocol with pseudo-random unit
//! vectors derived from `sha256(seed, text)`, so the same text always maps to
//! the same vector. Texts are cut to the first `--max-length` whitespace
//! tokens before hashing. Responses within each batch are emitted in reverse
//! order to exercise out-of-order reassembly.
//!
//! `humir-stub score` answers the scorer protocol line by line.

use std::io::{self, BufRead, BufWriter, Write};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "humir-stub", about = "Deterministic test bridge and scorer")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    Embed {
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, env = "HUMIR_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "HUMIR_MAX_LENGTH", default_value_t = 256)]
        max_length: usize,
        /// Requests buffered before answering (answers come out reversed).
        #[arg(long, default_value_t = 4)]
        batch: usize,
        /// Send a vector of the wrong size for the n-th request (0-based).
        #[arg(long)]
        bad_dim_at: Option<usize>,
        /// Exit with status 1 after answering this many requests.
        #[arg(long)]
        crash_after: Option<usize>,
    },
    Score {
        #[arg(long, value_enum, default_value = "overlap")]
        mode: ScoreMode,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoreMode {
    /// Fraction of query tokens present in the document.
    Overlap,
    /// The document text parsed as a number.
    Numeric,
    /// Minus the document text parsed as a number.
    NegNumeric,
    /// Always 1.
    Constant,
}

fn stub_vector(seed: u64, text: &str, dim: usize, max_length: usize) -> Vec<f32> {
    let truncated: Vec<&str> = text.split_whitespace().take(max_length).collect();
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(truncated.join(" ").as_bytes());
    let key: [u8; 32] = h.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(key);
    let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = raw
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);
    raw.iter().map(|x| (x / norm) as f32).collect()
}

fn tokens(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn score(mode: ScoreMode, query: &str, doc: &str) -> Result<f64, String> {
    match mode {
        ScoreMode::Constant => Ok(1.0),
        ScoreMode::Numeric | ScoreMode::NegNumeric => {
            let v: f64 = doc
                .trim()
                .parse()
                .map_err(|_| format!("`{doc}` is not a number"))?;
            Ok(if matches!(mode, ScoreMode::Numeric) {
                v
            } else {
                -v
            })
        }
        ScoreMode::Overlap => {
            let q = tokens(query);
            if q.is_empty() {
                return Ok(0.0);
            }
            let d = tokens(doc);
            Ok(q.iter().filter(|t| d.contains(t)).count() as f64 / q.len() as f64)
        }
    }
}

fn field<'a>(v: &'a Value, name: &str) -> Option<&'a str> {
    v.get(name).and_then(Value::as_str)
}

fn run(cli: Cli) -> io::Result<ExitCode> {
    let stdin = io::stdin().lock();
    let mut out = BufWriter::new(io::stdout().lock());
    match cli.cmd {
        Cmd::Embed {
            dim,
            seed,
            max_length,
            batch,
            bad_dim_at,
            crash_after,
        } => {
            writeln!(
                out,
                "{}",
                json!({"dim": dim, "model": "stub", "pooling": "first-token", "max_length": max_length})
            )?;
            out.flush()?;
            let mut pending: Vec<String> = Vec::new();
            let mut answered = 0usize;
            let mut received = 0usize;
            let mut flush =
                |pending: &mut Vec<String>, out: &mut BufWriter<_>| -> io::Result<bool> {
                    while let Some(line) = pending.pop() {
                        if crash_after == Some(answered) {
                            out.flush()?;
                            return Ok(false);
                        }
                        writeln!(out, "{line}")?;
                        answered += 1;
                    }
                    out.flush()?;
                    Ok(true)
                };
            for line in stdin.lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let reply = match serde_json::from_str::<Value>(&line) {
                    Ok(v) => match (field(&v, "id"), field(&v, "text")) {
                        (Some(id), Some(text)) => {
                            let mut vec = stub_vector(seed, text, dim, max_length);
                            if bad_dim_at == Some(received) {
                                vec.push(0.0);
                            }
                            json!({"id": id, "vector": vec})
                        }
                        (Some(id), None) => json!({"id": id, "error": "missing text"}),
                        _ => json!({"id": "", "error": "missing id"}),
                    },
                    Err(e) => json!({"id": "", "error": e.to_string()}),
                };
                received += 1;
                pending.push(reply.to_string());
                if pending.len() >= batch.max(1) && !flush(&mut pending, &mut out)? {
                    return Ok(ExitCode::from(1));
                }
            }
            if !flush(&mut pending, &mut out)? {
                return Ok(ExitCode::from(1));
            }
        }
        Cmd::Score { mode } => {
            for line in stdin.lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let v: Value = serde_json::from_str(&line).unwrap_or(Value::Null);
                let id = field(&v, "id").unwrap_or("");
                let reply = match (field(&v, "query"), field(&v, "doc")) {
                    (Some(q), Some(d)) => match score(mode, q, d) {
                        Ok(s) => json!({"id": id, "score": s}),
                        Err(e) => json!({"id": id, "error": e}),
                    },
                    _ => json!({"id": id, "error": "request needs query and doc"}),
                };
                writeln!(out, "{reply}")?;
                out.flush()?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        // Broken pipe from a parent that stopped reading is not our error.
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("humir-stub: {e}");
            ExitCode::from(2)
        }
    }
}
