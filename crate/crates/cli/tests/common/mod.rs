#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use humir_core::store::write_store;
use humir_testkit::{gen, rng};

pub const HUMIR: &str = env!("CARGO_BIN_EXE_humir");
pub const STUB: &str = env!("CARGO_BIN_EXE_humir-stub");

pub fn stub(args: &str) -> String {
    format!("{STUB} {args}")
}

/// Runs `humir` in `dir` with a scrubbed environment.
pub fn humir(dir: &Path, args: &[&str]) -> Output {
    Command::new(HUMIR)
        .args(args)
        .current_dir(dir)
        .env_remove("HUMIR_BRIDGE")
        .env_remove("HUMIR_SCORER")
        .env_remove("HUMIR_SEED")
        .env_remove("RUST_LOG")
        .output()
        .expect("spawn humir")
}

pub fn ok(dir: &Path, args: &[&str]) -> String {
    let out = humir(dir, args);
    assert!(
        out.status.success(),
        "humir {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// A seeded collection: `docs.tsv`, `topics.tsv` and `qrels.txt`.
pub fn write_collection(dir: &Path, n_docs: usize, n_topics: usize, seed: u64) {
    let mut r = rng(seed);
    let mut docs = String::new();
    for i in 0..n_docs {
        docs.push_str(&format!("d{i:03}\t{}\n", gen::text(&mut r, 15)));
    }
    let mut topics = String::new();
    let mut qrels = String::new();
    for t in 0..n_topics {
        topics.push_str(&format!("q{t:02}\t{}\n", gen::text(&mut r, 4)));
        for i in (t % 3..n_docs).step_by(3) {
            qrels.push_str(&format!("q{t:02} 0 d{i:03} {}\n", (i + t) % 2));
        }
    }
    fs::write(dir.join("docs.tsv"), docs).unwrap();
    fs::write(dir.join("topics.tsv"), topics).unwrap();
    fs::write(dir.join("qrels.txt"), qrels).unwrap();
}

/// Random topic and document stores for shape checks.
pub fn write_random_stores(
    dir: &Path,
    n_topics: usize,
    n_docs: usize,
    dim: usize,
    seed: u64,
) -> (PathBuf, PathBuf) {
    let mut r = rng(seed);
    let docs = gen::matrix(&mut r, n_docs, dim, 0.05);
    let topics: Vec<(String, Vec<f32>)> = (0..n_topics)
        .map(|t| (format!("T{t:02}"), gen::nonzero_vector(&mut r, dim)))
        .collect();
    let (t, d) = (dir.join("topic_store"), dir.join("doc_store"));
    write_store(topics, &t).unwrap();
    write_store(docs, &d).unwrap();
    (t, d)
}

/// The full stub pipeline. Returns the produced files, relative to `dir`.
pub fn pipeline(dir: &Path) -> Vec<&'static str> {
    write_collection(dir, 40, 6, 11);
    let bridge = stub("embed --dim 16 --batch 3");
    ok(
        dir,
        &[
            "embed",
            "--input",
            "docs.tsv",
            "--out",
            "docs_store",
            "--bridge",
            &bridge,
        ],
    );
    ok(
        dir,
        &[
            "embed",
            "--input",
            "topics.tsv",
            "--kind",
            "topics",
            "--out",
            "topic_store",
            "--bridge",
            &bridge,
        ],
    );
    ok(
        dir,
        &["index", "--corpus", "docs.tsv", "--out", "docs.bm25"],
    );
    ok(
        dir,
        &[
            "search",
            "--mode",
            "dense",
            "--topic-store",
            "topic_store",
            "--doc-store",
            "docs_store",
            "--depth",
            "30",
            "--out",
            "dense.run",
        ],
    );
    ok(
        dir,
        &[
            "search",
            "--mode",
            "bm25",
            "--index",
            "docs.bm25",
            "--topics",
            "topics.tsv",
            "--depth",
            "30",
            "--out",
            "bm25.run",
        ],
    );
    let scorer = stub("score --mode overlap");
    ok(
        dir,
        &[
            "rerank",
            "--run",
            "dense.run",
            "--topics",
            "topics.tsv",
            "--corpus",
            "docs.tsv",
            "--scorer",
            &scorer,
            "--rerank-depth",
            "20",
            "--batch-size",
            "7",
            "--out",
            "rerank.run",
        ],
    );
    ok(
        dir,
        &[
            "fuse",
            "--run",
            "dense.run",
            "--run",
            "bm25.run",
            "--out",
            "fused.run",
        ],
    );
    ok(
        dir,
        &[
            "eval",
            "--run",
            "rerank.run",
            "--qrels",
            "qrels.txt",
            "--per-query",
            "rerank.tsv",
            "--json",
            "rerank.json",
            "--table",
            "rerank.table",
        ],
    );
    ok(
        dir,
        &[
            "compare",
            "--qrels",
            "qrels.txt",
            "--run",
            "dense.run",
            "--run",
            "bm25.run",
            "--run",
            "rerank.run",
            "--run",
            "fused.run",
            "--table",
            "compare.table",
        ],
    );
    vec![
        "docs_store/manifest.json",
        "docs_store/vectors.bin",
        "topic_store/manifest.json",
        "topic_store/vectors.bin",
        "docs.bm25",
        "dense.run",
        "bm25.run",
        "rerank.run",
        "fused.run",
        "rerank.tsv",
        "rerank.json",
        "rerank.table",
        "compare.table",
    ]
}
