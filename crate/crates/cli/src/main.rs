//! `humir`: command-line driver for the retrieval pipeline.
//!
//! ```bash
//! humir ingest --corpus docs.tsv --topics topics.tsv --qrels qrels.txt
//! humir embed  --input docs.tsv --out stores/docs --bridge "python3 bridge.py"
//! humir embed  --input topics.tsv --kind topics --out stores/topics
//! humir index  --corpus docs.tsv --out docs.bm25
//! humir search --mode dense --topic-store stores/topics --doc-store stores/docs --depth 300 --out dense.run
//! humir search --mode bm25 --index docs.bm25 --topics topics.tsv --out bm25.run
//! humir rerank --run dense.run --topics topics.tsv --corpus docs.tsv --scorer "python3 scorer.py" --out rr.run
//! humir fuse   --run dense.run --run bm25.run --out fused.run
//! humir eval   --run rr.run --qrels qrels.txt --per-query rr.tsv
//! humir compare --qrels qrels.txt --run dense.run --run rr.run
//! ```
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 external-process error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "humir",
    version,
    about = "Dense, lexical and re-ranked retrieval with TREC-style evaluation"
)]
struct Cli {
    /// Seed handed to the bridge and scorer processes (`HUMIR_SEED`).
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Validate a corpus, topics and qrels; optionally write canonical JSONL copies.
    Ingest(IngestArgs),
    /// Encode texts through the bridge process into an embedding store.
    Embed(EmbedArgs),
    /// Build and save a BM25 inverted index.
    Index(IndexArgs),
    /// Produce a run by dense or BM25 retrieval.
    Search(SearchArgs),
    /// Re-score the head of a run with an external scorer process.
    Rerank(RerankArgs),
    /// Reciprocal rank fusion of several runs.
    Fuse(FuseArgs),
    /// Validate a run file and write it back out, optionally re-tagged.
    Emit(EmitArgs),
    /// Evaluate one run against qrels.
    Eval(EvalArgs),
    /// Evaluate several runs and print them side by side.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub(crate) enum FormatArg {
    Tsv,
    Jsonl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub(crate) enum KindArg {
    Docs,
    Topics,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub(crate) enum ModeArg {
    Dense,
    Bm25,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub(crate) enum ZeroRelArg {
    /// Leave topics without relevant documents out of the averages.
    Exclude,
    /// Count them with zero on every metric.
    Zero,
}

#[derive(Args, Debug)]
pub(crate) struct IngestArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Corpus format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long)]
    pub topics: Option<PathBuf>,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    #[arg(long)]
    pub out_corpus: Option<PathBuf>,
    #[arg(long)]
    pub out_topics: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub(crate) struct EmbedArgs {
    /// Corpus or topic file.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "docs")]
    pub kind: KindArg,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Output store directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Bridge command line.
    #[arg(long, env = "HUMIR_BRIDGE", default_value = "humir-bridge")]
    pub bridge: String,
    /// Model name recorded in the manifest when the bridge does not report one.
    #[arg(long)]
    pub model: Option<String>,
    /// Truncation length in tokens, passed to the bridge as `HUMIR_MAX_LENGTH`.
    #[arg(long, default_value_t = 256)]
    pub max_length: usize,
    /// Store raw bridge vectors instead of unit-normalized rows.
    #[arg(long)]
    pub no_normalize: bool,
    /// Seconds to wait for each bridge output line; 0 waits forever.
    #[arg(long, default_value_t = 600)]
    pub timeout_secs: u64,
}

#[derive(Args, Debug)]
pub(crate) struct IndexArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub(crate) struct SearchArgs {
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Documents per topic.
    #[arg(long, default_value_t = 100)]
    pub depth: usize,
    #[arg(long, default_value = "humir")]
    pub tag: String,
    /// Topic embedding store (dense).
    #[arg(long)]
    pub topic_store: Option<PathBuf>,
    /// Document embedding store (dense).
    #[arg(long)]
    pub doc_store: Option<PathBuf>,
    /// BM25 index file (bm25).
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Topic file (bm25).
    #[arg(long)]
    pub topics: Option<PathBuf>,
    #[arg(long, default_value_t = 1.5)]
    pub k1: f64,
    #[arg(long, default_value_t = 0.75)]
    pub b: f64,
}

#[derive(Args, Debug)]
pub(crate) struct RerankArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub topics: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long)]
    pub out: PathBuf,
    /// Scorer command line.
    #[arg(long, env = "HUMIR_SCORER", default_value = "humir-scorer")]
    pub scorer: String,
    /// Candidates re-scored per topic; the rest of the run is dropped.
    #[arg(long, default_value_t = 100)]
    pub rerank_depth: usize,
    /// Pairs per request batch.
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Seconds to wait for a batch; 0 waits forever.
    #[arg(long, default_value_t = 120)]
    pub timeout_secs: u64,
    #[arg(long, default_value = "humir")]
    pub tag: String,
    /// Accept a sloppy input run (re-sorted and re-ranked).
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Args, Debug)]
pub(crate) struct FuseArgs {
    /// Input runs (repeat the flag).
    #[arg(long = "run", required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 60.0)]
    pub rrf_k: f64,
    /// Keep only the top entries of each fused topic.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long, default_value = "humir")]
    pub tag: String,
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Args, Debug)]
pub(crate) struct EmitArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// New run tag; defaults to the tag found on the first line.
    #[arg(long)]
    pub tag: Option<String>,
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Args, Debug)]
pub(crate) struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    /// Row label; defaults to the run file name.
    #[arg(long)]
    pub name: Option<String>,
    /// Per-query TSV output.
    #[arg(long)]
    pub per_query: Option<PathBuf>,
    /// Full report as JSON (fractions and percentages).
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Also write the printed table here.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "exclude")]
    pub zero_rel_topics: ZeroRelArg,
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Args, Debug)]
pub(crate) struct CompareArgs {
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long = "run", required = true)]
    pub runs: Vec<PathBuf>,
    /// Row labels, one per run, in the same order.
    #[arg(long = "name")]
    pub names: Vec<String>,
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "exclude")]
    pub zero_rel_topics: ZeroRelArg,
    #[arg(long)]
    pub lenient: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .init();

    let seed = cli.seed;
    let result = match cli.command {
        Cmd::Ingest(a) => commands::ingest(a),
        Cmd::Embed(a) => commands::embed(a, seed),
        Cmd::Index(a) => commands::index(a),
        Cmd::Search(a) => commands::search(a),
        Cmd::Rerank(a) => commands::rerank(a, seed),
        Cmd::Fuse(a) => commands::fuse(a),
        Cmd::Emit(a) => commands::emit_cmd(a),
        Cmd::Eval(a) => commands::eval(a),
        Cmd::Compare(a) => commands::compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("humir: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
