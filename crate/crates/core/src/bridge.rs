//! Line-delimited JSON over a child process's stdin/stdout.
//!
//! Encoder bridge:
//!
//! ```text
//! -> {"id": "d1", "text": "..."}
//! <- {"dim": 768, ...}                 handshake, once, before any response
//! <- {"id": "d1", "vector": [...]}     or {"id": "d1", "error": "..."}
//! ```
//!
//! Pair scorer:
//!
//! ```text
//! -> {"id": "q1::d7", "query": "...", "doc": "..."}
//! <- {"id": "q1::d7", "score": 0.42}
//! ```
//!
//! Exactly one response per request; responses may arrive in any order.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tracing::debug;

use crate::error::{Error, Result};
use crate::rerank::{PairScorer, ScoreRequest, ScoreResponse};

/// A program and its arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessCommand {
    pub program: String,
    pub args: Vec<String>,
    pub env: Vec<(String, String)>,
}

impl ProcessCommand {
    /// Takes an argv; the first element is the program.
    pub fn from_argv<I, S>(argv: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut it = argv.into_iter().map(Into::into);
        let program = it
            .next()
            .filter(|p| !p.is_empty())
            .ok_or_else(|| Error::InvalidArgument("empty command line".into()))?;
        Ok(Self {
            program,
            args: it.collect(),
            env: Vec::new(),
        })
    }

    pub fn env(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.env.push((key.into(), value.into()));
        self
    }

    fn display(&self) -> String {
        std::iter::once(self.program.as_str())
            .chain(self.args.iter().map(String::as_str))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// A child with piped stdio and a background thread draining its stdout.
struct LineProcess {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    label: String,
}

impl LineProcess {
    fn spawn(cmd: &ProcessCommand) -> Result<Self> {
        let label = cmd.display();
        let mut child = Command::new(&cmd.program)
            .args(&cmd.args)
            .envs(cmd.env.iter().map(|(k, v)| (k, v)))
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::External(format!("cannot start `{label}`: {e}")))?;
        let stdout = child.stdout.take().expect("piped stdout");
        let stdin = child.stdin.take();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        debug!(command = %label, "spawned child");
        Ok(Self {
            child,
            stdin,
            lines: rx,
            label,
        })
    }

    /// Next non-blank line, `None` at end of stream.
    fn recv(&self, deadline: Option<Instant>) -> Result<Option<String>> {
        loop {
            let got = match deadline {
                None => self
                    .lines
                    .recv()
                    .map_err(|_| RecvTimeoutError::Disconnected),
                Some(d) => self
                    .lines
                    .recv_timeout(d.saturating_duration_since(Instant::now())),
            };
            match got {
                Ok(Ok(line)) if line.trim().is_empty() => continue,
                Ok(Ok(line)) => return Ok(Some(line)),
                Ok(Err(e)) => {
                    return Err(Error::External(format!(
                        "`{}`: read failed: {e}",
                        self.label
                    )))
                }
                Err(RecvTimeoutError::Disconnected) => return Ok(None),
                Err(RecvTimeoutError::Timeout) => {
                    return Err(Error::External(format!(
                        "`{}`: timed out waiting for output",
                        self.label
                    )))
                }
            }
        }
    }

    fn wait_success(&mut self) -> Result<()> {
        drop(self.stdin.take());
        let status = self
            .child
            .wait()
            .map_err(|e| Error::External(format!("`{}`: {e}", self.label)))?;
        if status.success() {
            Ok(())
        } else {
            Err(Error::External(format!(
                "`{}` exited with {status}",
                self.label
            )))
        }
    }
}

impl Drop for LineProcess {
    fn drop(&mut self) {
        drop(self.stdin.take());
        if let Ok(None) = self.child.try_wait() {
            let _ = self.child.kill();
        }
        let _ = self.child.wait();
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    id: &'a str,
    text: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    id: String,
    #[serde(default)]
    vector: Option<Vec<f64>>,
    #[serde(default)]
    error: Option<String>,
}

/// Vectors returned by a bridge session, in request order.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedded {
    pub dim: usize,
    pub vectors: Vec<(String, Vec<f32>)>,
    /// Extra handshake fields (model name, truncation length, pooling).
    pub info: BTreeMap<String, String>,
}

fn parse_handshake(line: &str) -> Result<(usize, BTreeMap<String, String>)> {
    let v: Value = serde_json::from_str(line)
        .map_err(|e| Error::External(format!("bad handshake `{line}`: {e}")))?;
    let obj = v
        .as_object()
        .ok_or_else(|| Error::External(format!("bad handshake `{line}`")))?;
    let dim = obj
        .get("dim")
        .and_then(Value::as_u64)
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::External(format!("handshake lacks a positive `dim`: `{line}`")))?;
    let info = obj
        .iter()
        .filter(|(k, _)| k.as_str() != "dim")
        .map(|(k, v)| {
            let s = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            (k.clone(), s)
        })
        .collect();
    Ok((dim as usize, info))
}

/// Streams `(id, text)` items through an encoder bridge. Any protocol
/// violation, error response or non-zero exit fails the whole session.
pub fn embed_texts(
    cmd: &ProcessCommand,
    items: &[(String, String)],
    timeout: Option<Duration>,
) -> Result<Embedded> {
    let mut proc = LineProcess::spawn(cmd)?;
    let stdin = proc.stdin.take().expect("piped stdin");
    let payload: Vec<String> = items
        .iter()
        .map(|(id, text)| {
            serde_json::to_string(&EmbedRequest { id, text }).expect("strings serialise")
        })
        .collect();
    let writer = thread::spawn(move || -> std::io::Result<()> {
        let mut w = BufWriter::new(stdin);
        for line in payload {
            w.write_all(line.as_bytes())?;
            w.write_all(b"\n")?;
        }
        w.flush()
    });

    let deadline = || timeout.map(|t| Instant::now() + t);
    let first = proc
        .recv(deadline())?
        .ok_or_else(|| Error::External(format!("`{}` closed without a handshake", proc.label)))?;
    let (dim, info) = parse_handshake(&first)?;

    let position: HashMap<&str, usize> = items
        .iter()
        .enumerate()
        .map(|(i, (id, _))| (id.as_str(), i))
        .collect();
    let mut out: Vec<Option<Vec<f32>>> = vec![None; items.len()];
    let mut answered = 0;
    while answered < items.len() {
        let Some(line) = proc.recv(deadline())? else {
            let missing = out
                .iter()
                .position(Option::is_none)
                .map(|i| items[i].0.as_str())
                .unwrap_or("?");
            return Err(Error::External(format!(
                "`{}` stopped after {answered} of {} vectors (first missing: `{missing}`)",
                proc.label,
                items.len()
            )));
        };
        let resp: EmbedResponse = serde_json::from_str(&line)
            .map_err(|e| Error::External(format!("malformed bridge response `{line}`: {e}")))?;
        let slot = *position
            .get(resp.id.as_str())
            .ok_or_else(|| Error::External(format!("bridge answered unknown id `{}`", resp.id)))?;
        if let Some(msg) = resp.error {
            return Err(Error::External(format!(
                "bridge failed on `{}`: {msg}",
                resp.id
            )));
        }
        let vector = resp.vector.ok_or_else(|| {
            Error::External(format!("bridge response for `{}` has no vector", resp.id))
        })?;
        if vector.len() != dim {
            return Err(Error::External(format!(
                "bridge returned {} values for `{}` but announced dim {dim}",
                vector.len(),
                resp.id
            )));
        }
        if out[slot].is_some() {
            return Err(Error::External(format!(
                "bridge answered `{}` twice",
                resp.id
            )));
        }
        out[slot] = Some(vector.into_iter().map(|x| x as f32).collect());
        answered += 1;
    }

    match writer.join() {
        Ok(Ok(())) => {}
        Ok(Err(e)) => {
            return Err(Error::External(format!(
                "`{}`: write failed: {e}",
                proc.label
            )))
        }
        Err(_) => return Err(Error::External("bridge writer thread panicked".into())),
    }
    if let Some(extra) = proc.recv(deadline())? {
        return Err(Error::External(format!(
            "unexpected extra bridge output `{extra}`"
        )));
    }
    proc.wait_success()?;

    let vectors = items
        .iter()
        .zip(out)
        .map(|((id, _), v)| (id.clone(), v.expect("all answered")))
        .collect();
    Ok(Embedded { dim, vectors, info })
}

#[derive(Deserialize)]
struct ScoreLine {
    id: String,
    #[serde(default)]
    score: Option<f64>,
    #[serde(default)]
    error: Option<String>,
}

/// A long-lived scorer process. Batches are written whole, then exactly as
/// many responses are read back.
pub struct ProcessScorer {
    proc: LineProcess,
    timeout: Option<Duration>,
}

impl ProcessScorer {
    pub fn spawn(cmd: &ProcessCommand, timeout: Option<Duration>) -> Result<Self> {
        Ok(Self {
            proc: LineProcess::spawn(cmd)?,
            timeout,
        })
    }

    /// Closes stdin and requires a clean exit.
    pub fn finish(mut self) -> Result<()> {
        self.proc.wait_success()
    }
}

impl PairScorer for ProcessScorer {
    fn score_batch(&mut self, batch: &[ScoreRequest]) -> Result<Vec<ScoreResponse>> {
        let pending = |got: &[ScoreResponse]| -> String {
            batch
                .iter()
                .find(|r| !got.iter().any(|g| g.id == r.id))
                .map_or_else(|| "?".to_string(), |r| r.id.clone())
        };
        {
            let label = self.proc.label.clone();
            let stdin = self
                .proc
                .stdin
                .as_mut()
                .ok_or_else(|| Error::External(format!("`{label}`: stdin closed")))?;
            let mut w = BufWriter::new(stdin);
            for r in batch {
                let line = serde_json::to_string(r).expect("strings serialise");
                w.write_all(line.as_bytes())
                    .and_then(|_| w.write_all(b"\n"))
                    .map_err(|e| Error::Scorer {
                        pair_id: r.id.clone(),
                        message: format!("write failed: {e}"),
                    })?;
            }
            w.flush().map_err(|e| Error::Scorer {
                pair_id: batch.first().map_or_else(String::new, |r| r.id.clone()),
                message: format!("write failed: {e}"),
            })?;
        }

        let deadline = self.timeout.map(|t| Instant::now() + t);
        let mut got = Vec::with_capacity(batch.len());
        while got.len() < batch.len() {
            let line = match self.proc.recv(deadline) {
                Ok(Some(line)) => line,
                Ok(None) => {
                    return Err(Error::Scorer {
                        pair_id: pending(&got),
                        message: "scorer exited before answering".into(),
                    })
                }
                Err(e) => {
                    return Err(Error::Scorer {
                        pair_id: pending(&got),
                        message: e.to_string(),
                    })
                }
            };
            let parsed: ScoreLine = serde_json::from_str(&line).map_err(|e| Error::Scorer {
                pair_id: pending(&got),
                message: format!("malformed response `{line}`: {e}"),
            })?;
            if let Some(msg) = parsed.error {
                return Err(Error::Scorer {
                    pair_id: parsed.id,
                    message: msg,
                });
            }
            let score = parsed.score.ok_or_else(|| Error::Scorer {
                pair_id: parsed.id.clone(),
                message: "response has no score".into(),
            })?;
            got.push(ScoreResponse {
                id: parsed.id,
                score,
            });
        }
        Ok(got)
    }
}
