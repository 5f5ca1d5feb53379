use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use humir_core::bm25::{build_index, retrieve_bm25_batch, Bm25Params, InvertedIndex};
use humir_core::bridge::{embed_texts, ProcessCommand, ProcessScorer};
use humir_core::corpus::{self, Document, TextFormat};
use humir_core::dense::retrieve_dense_batch;
use humir_core::metrics::{
    compare_runs, evaluate_run, write_per_query_tsv, EvalOptions, MetricReport, ZeroRelevant,
};
use humir_core::rerank::{fuse_runs, rerank_with_scorer, select_candidates};
use humir_core::run::{emit_run, parse_run_with, Validation};
use humir_core::store::{normalize_rows, open_store, write_matrix, EmbeddingMatrix};
use humir_core::{Error, RankedList};
use tracing::info;

use crate::{
    CompareArgs, EmbedArgs, EmitArgs, EvalArgs, FormatArg, FuseArgs, IndexArgs, IngestArgs,
    KindArg, ModeArg, RerankArgs, SearchArgs, ZeroRelArg,
};

#[derive(Debug)]
pub(crate) enum CliError {
    Usage(String),
    Core(Error),
}

impl CliError {
    pub(crate) fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_external() => 3,
            CliError::Core(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult = Result<(), CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| {
        CliError::Core(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn text_format(arg: Option<FormatArg>, path: &Path) -> TextFormat {
    match arg {
        Some(FormatArg::Tsv) => TextFormat::Tsv,
        Some(FormatArg::Jsonl) => TextFormat::Jsonl,
        None => TextFormat::from_path(path),
    }
}

fn validation(lenient: bool) -> Validation {
    if lenient {
        Validation::Lenient
    } else {
        Validation::Strict
    }
}

/// Best-effort absolute form of a path that may not exist yet.
fn resolved(p: &Path) -> PathBuf {
    if let Ok(c) = p.canonicalize() {
        return c;
    }
    let parent = p
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    match (parent.canonicalize(), p.file_name()) {
        (Ok(dir), Some(name)) => dir.join(name),
        _ => p.to_path_buf(),
    }
}

/// Refuses to run when an output path would overwrite one of the inputs.
fn ensure_distinct(outputs: &[&Path], inputs: &[&Path]) -> CliResult {
    for out in outputs {
        let o = resolved(out);
        if let Some(clash) = inputs.iter().find(|i| resolved(i) == o) {
            return Err(usage(format!(
                "output {} would overwrite input {}",
                out.display(),
                clash.display()
            )));
        }
    }
    Ok(())
}

fn check_tag(tag: &str) -> CliResult {
    if tag.is_empty() || tag.chars().any(char::is_whitespace) {
        return Err(usage(format!(
            "run tag `{tag}` must be a non-empty token without whitespace"
        )));
    }
    Ok(())
}

fn command_line(cmd: &str, seed: u64) -> Result<ProcessCommand, CliError> {
    let argv =
        shlex::split(cmd).ok_or_else(|| usage(format!("cannot parse command line `{cmd}`")))?;
    Ok(ProcessCommand::from_argv(argv)
        .map_err(|e| usage(e.to_string()))?
        .env("HUMIR_SEED", seed.to_string()))
}

fn timeout(secs: u64) -> Option<Duration> {
    (secs > 0).then(|| Duration::from_secs(secs))
}

fn zero_rel(arg: ZeroRelArg) -> EvalOptions {
    EvalOptions {
        zero_relevant: match arg {
            ZeroRelArg::Exclude => ZeroRelevant::Exclude,
            ZeroRelArg::Zero => ZeroRelevant::ScoreAsZero,
        },
    }
}

pub(crate) fn ingest(a: IngestArgs) -> CliResult {
    if a.corpus.is_none() && a.topics.is_none() && a.qrels.is_none() {
        return Err(usage(
            "nothing to ingest: pass --corpus, --topics and/or --qrels",
        ));
    }
    let inputs: Vec<&Path> = [&a.corpus, &a.topics, &a.qrels]
        .into_iter()
        .flatten()
        .map(PathBuf::as_path)
        .collect();
    let outputs: Vec<&Path> = [&a.out_corpus, &a.out_topics]
        .into_iter()
        .flatten()
        .map(PathBuf::as_path)
        .collect();
    ensure_distinct(&outputs, &inputs)?;

    if let Some(path) = &a.corpus {
        let docs = corpus::load_corpus(path, text_format(a.format, path))?;
        println!("corpus\t{}\t{} documents", path.display(), docs.len());
        if let Some(out) = &a.out_corpus {
            write_file(
                out,
                &corpus::write_documents(&docs, TextFormat::from_path(out))?,
            )?;
        }
    } else if a.out_corpus.is_some() {
        return Err(usage("--out-corpus needs --corpus"));
    }
    if let Some(path) = &a.topics {
        let topics = corpus::load_topics(path)?;
        println!("topics\t{}\t{} topics", path.display(), topics.len());
        if let Some(out) = &a.out_topics {
            write_file(
                out,
                &corpus::write_topics(&topics, TextFormat::from_path(out))?,
            )?;
        }
    } else if a.out_topics.is_some() {
        return Err(usage("--out-topics needs --topics"));
    }
    if let Some(path) = &a.qrels {
        let q = corpus::load_qrels(path)?;
        let topics = q.topics().count();
        let relevant: usize = q.topics().map(|t| q.num_relevant(t)).sum();
        println!(
            "qrels\t{}\t{} judgements, {topics} topics, {relevant} relevant",
            path.display(),
            q.len()
        );
    }
    Ok(())
}

fn load_texts(
    kind: KindArg,
    path: &Path,
    format: Option<FormatArg>,
) -> Result<Vec<(String, String)>, CliError> {
    Ok(match kind {
        KindArg::Docs => corpus::load_corpus(path, text_format(format, path))?
            .into_iter()
            .map(|d| (d.doc_id, d.text))
            .collect(),
        KindArg::Topics => {
            let bytes = fs::read(path).map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            corpus::parse_topics(
                &bytes,
                text_format(format, path),
                &path.display().to_string(),
            )?
            .into_iter()
            .map(|t| (t.topic_id, t.text))
            .collect()
        }
    })
}

/// Sibling scratch directory for a store being written.
fn scratch_dir(out: &Path) -> PathBuf {
    let name = out
        .file_name()
        .map_or_else(|| "store".into(), |n| n.to_string_lossy().into_owned());
    out.with_file_name(format!(".{name}.partial-{}", std::process::id()))
}

pub(crate) fn embed(a: EmbedArgs, seed: u64) -> CliResult {
    ensure_distinct(&[&a.out], &[&a.input])?;
    let items = load_texts(a.kind, &a.input, a.format)?;
    let cmd = command_line(&a.bridge, seed)?
        .env("HUMIR_MAX_LENGTH", a.max_length.to_string())
        .env("HUMIR_MODEL", a.model.clone().unwrap_or_default());
    info!(n = items.len(), bridge = %a.bridge, "embedding");
    let embedded = embed_texts(&cmd, &items, timeout(a.timeout_secs))?;

    let mut matrix = EmbeddingMatrix::from_rows(embedded.dim, embedded.vectors)?;
    if !a.no_normalize {
        matrix = normalize_rows(&matrix)?;
    }
    for (k, v) in &embedded.info {
        matrix.set_meta(k.clone(), v.clone());
    }
    let mut defaults = vec![
        ("max_length", a.max_length.to_string()),
        ("pooling", "first-token".to_string()),
        ("seed", seed.to_string()),
    ];
    if let Some(m) = &a.model {
        defaults.push(("model", m.clone()));
    }
    for (k, v) in defaults {
        if !matrix.manifest().meta.contains_key(k) {
            matrix.set_meta(k, v);
        }
    }

    let scratch = scratch_dir(&a.out);
    let _ = fs::remove_dir_all(&scratch);
    let written = write_matrix(&matrix, &scratch).and_then(|m| {
        if a.out.exists() {
            fs::remove_dir_all(&a.out).map_err(|e| Error::Io {
                path: a.out.clone(),
                source: e,
            })?;
        }
        fs::rename(&scratch, &a.out).map_err(|e| Error::Io {
            path: a.out.clone(),
            source: e,
        })?;
        Ok(m)
    });
    let manifest = match written {
        Ok(m) => m,
        Err(e) => {
            let _ = fs::remove_dir_all(&scratch);
            return Err(e.into());
        }
    };
    println!(
        "store\t{}\t{} vectors, dim {}, normalized {}",
        a.out.display(),
        manifest.count,
        manifest.dim,
        manifest.normalized
    );
    Ok(())
}

pub(crate) fn index(a: IndexArgs) -> CliResult {
    ensure_distinct(&[&a.out], &[&a.corpus])?;
    let docs: Vec<Document> = corpus::load_corpus(&a.corpus, text_format(a.format, &a.corpus))?;
    let idx = build_index(&docs);
    idx.save(&a.out)?;
    println!(
        "index\t{}\t{} documents, {} terms, avgdl {:.3}",
        a.out.display(),
        idx.num_docs(),
        idx.num_terms(),
        idx.avgdl()
    );
    Ok(())
}

fn emit(lists: &[RankedList], tag: &str, out: &Path) -> CliResult {
    let lines = emit_run(lists, tag, out)?;
    println!(
        "run\t{}\t{} topics, {lines} lines, tag {tag}",
        out.display(),
        lists.len()
    );
    Ok(())
}

pub(crate) fn search(a: SearchArgs) -> CliResult {
    check_tag(&a.tag)?;
    if a.depth == 0 {
        return Err(usage("--depth must be at least 1"));
    }
    let lists = match a.mode {
        ModeArg::Dense => {
            let (Some(ts), Some(ds)) = (&a.topic_store, &a.doc_store) else {
                return Err(usage("dense search needs --topic-store and --doc-store"));
            };
            ensure_distinct(&[&a.out], &[ts, ds])?;
            let topics = open_store(ts)?;
            let docs = open_store(ds)?;
            retrieve_dense_batch(&topics, &docs, a.depth)?
        }
        ModeArg::Bm25 => {
            let (Some(ix), Some(tp)) = (&a.index, &a.topics) else {
                return Err(usage("bm25 search needs --index and --topics"));
            };
            ensure_distinct(&[&a.out], &[ix, tp])?;
            let params = Bm25Params::new(a.k1, a.b).map_err(|e| usage(e.to_string()))?;
            let idx = InvertedIndex::load(ix)?;
            let topics = corpus::load_topics(tp)?;
            retrieve_bm25_batch(&idx, &params, &topics, a.depth)?
        }
    };
    let mode = match a.mode {
        ModeArg::Dense => "dense",
        ModeArg::Bm25 => "bm25",
    };
    emit(&lists, &format!("{}-{mode}-d{}", a.tag, a.depth), &a.out)
}

pub(crate) fn rerank(a: RerankArgs, seed: u64) -> CliResult {
    check_tag(&a.tag)?;
    if a.rerank_depth == 0 || a.batch_size == 0 {
        return Err(usage("--rerank-depth and --batch-size must be at least 1"));
    }
    ensure_distinct(&[&a.out], &[&a.run, &a.topics, &a.corpus])?;
    let run = parse_run_with(&a.run, validation(a.lenient))?;
    let topics: HashMap<String, String> = corpus::load_topics(&a.topics)?
        .into_iter()
        .map(|t| (t.topic_id, t.text))
        .collect();
    let texts: HashMap<String, String> =
        corpus::load_corpus(&a.corpus, text_format(a.format, &a.corpus))?
            .into_iter()
            .map(|d| (d.doc_id, d.text))
            .collect();

    let cmd = command_line(&a.scorer, seed)?;
    let mut scorer = ProcessScorer::spawn(&cmd, timeout(a.timeout_secs))?;
    let mut out = Vec::with_capacity(run.len());
    for list in &run {
        let query = topics
            .get(&list.topic_id)
            .ok_or_else(|| Error::NotFound(format!("topic `{}`", list.topic_id)))?;
        let cands = select_candidates(list, a.rerank_depth)?;
        out.push(rerank_with_scorer(
            &cands,
            query,
            &texts,
            &mut scorer,
            a.batch_size,
        )?);
    }
    scorer.finish()?;
    emit(
        &out,
        &format!("{}-rerank-d{}", a.tag, a.rerank_depth),
        &a.out,
    )
}

pub(crate) fn fuse(a: FuseArgs) -> CliResult {
    check_tag(&a.tag)?;
    if a.depth == Some(0) {
        return Err(usage("--depth must be at least 1"));
    }
    let inputs: Vec<&Path> = a.runs.iter().map(PathBuf::as_path).collect();
    ensure_distinct(&[&a.out], &inputs)?;
    let runs = a
        .runs
        .iter()
        .map(|p| parse_run_with(p, validation(a.lenient)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut fused = fuse_runs(&runs, a.rrf_k).map_err(|e| match e {
        Error::InvalidArgument(m) => usage(m),
        other => other.into(),
    })?;
    if let Some(d) = a.depth {
        fused.iter_mut().for_each(|l| l.truncate(d));
    }
    emit(&fused, &format!("{}-rrf-k{}", a.tag, a.rrf_k), &a.out)
}

fn first_tag(path: &Path) -> Option<String> {
    let text = fs::read_to_string(path).ok()?;
    let line = text.lines().find(|l| !l.trim().is_empty())?;
    line.split_whitespace().nth(5).map(str::to_string)
}

pub(crate) fn emit_cmd(a: EmitArgs) -> CliResult {
    ensure_distinct(&[&a.out], &[&a.run])?;
    let lists = parse_run_with(&a.run, validation(a.lenient))?;
    let tag = a
        .tag
        .or_else(|| first_tag(&a.run))
        .unwrap_or_else(|| "humir".into());
    check_tag(&tag)?;
    emit(&lists, &tag, &a.out)
}

fn run_name(path: &Path) -> String {
    path.file_name().map_or_else(
        || path.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    )
}

fn evaluate_file(
    run: &Path,
    qrels: &corpus::QrelSet,
    opts: EvalOptions,
    lenient: bool,
) -> Result<MetricReport, CliError> {
    let lists = parse_run_with(run, validation(lenient))?;
    let report = evaluate_run(&lists, qrels, opts)?;
    if !report.unjudged_topics.is_empty() {
        eprintln!(
            "warning: {}: {} topics have no judgements and were skipped",
            run.display(),
            report.unjudged_topics.len()
        );
    }
    Ok(report)
}

pub(crate) fn eval(a: EvalArgs) -> CliResult {
    let outputs: Vec<&Path> = [&a.per_query, &a.json, &a.table]
        .into_iter()
        .flatten()
        .map(PathBuf::as_path)
        .collect();
    ensure_distinct(&outputs, &[&a.run, &a.qrels])?;
    let qrels = corpus::load_qrels(&a.qrels)?;
    let report = evaluate_file(&a.run, &qrels, zero_rel(a.zero_rel_topics), a.lenient)?;
    let name = a.name.unwrap_or_else(|| run_name(&a.run));
    let table = compare_runs(std::slice::from_ref(&report), &[name])?.to_string();
    print!("{table}");
    if let Some(p) = &a.table {
        write_file(p, &table)?;
    }
    if let Some(p) = &a.per_query {
        write_file(p, &write_per_query_tsv(&report))?;
    }
    if let Some(p) = &a.json {
        let doc = serde_json::json!({
            "fractions": report.summary,
            "percentages": report.percentages(),
            "evaluated_topics": report.evaluated_topics,
            "num_ret": report.num_ret,
            "num_rel": report.num_rel,
            "num_rel_ret": report.num_rel_ret,
            "unjudged_topics": report.unjudged_topics,
            "per_query": report.per_query,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("report serialises");
        text.push('\n');
        write_file(p, &text)?;
    }
    Ok(())
}

pub(crate) fn compare(a: CompareArgs) -> CliResult {
    if !a.names.is_empty() && a.names.len() != a.runs.len() {
        return Err(usage(format!(
            "{} --name values for {} runs",
            a.names.len(),
            a.runs.len()
        )));
    }
    let mut inputs: Vec<&Path> = a.runs.iter().map(PathBuf::as_path).collect();
    inputs.push(&a.qrels);
    if let Some(t) = &a.table {
        ensure_distinct(&[t], &inputs)?;
    }
    let qrels = corpus::load_qrels(&a.qrels)?;
    let opts = zero_rel(a.zero_rel_topics);
    let reports = a
        .runs
        .iter()
        .map(|r| evaluate_file(r, &qrels, opts, a.lenient))
        .collect::<Result<Vec<_>, _>>()?;
    let names = if a.names.is_empty() {
        a.runs.iter().map(|p| run_name(p)).collect()
    } else {
        a.names
    };
    let cmp = compare_runs(&reports, &names)?;
    for w in &cmp.warnings {
        eprintln!("warning: {w}");
    }
    let table = cmp.to_string();
    print!("{table}");
    if let Some(p) = &a.table {
        write_file(p, &table)?;
    }
    Ok(())
}
