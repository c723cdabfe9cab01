//! The `rare` command line: `synth`, `train`, `index`, `search`, `eval`,
//! `ablate` and `bench`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
//! Every output artifact gets a run manifest next to it
//! (`<out>.manifest.json`, or `manifest.json` inside an output directory).
//!
//! `--config FILE` reads flat `key = value` lines; each key names a flag of
//! the subcommand and is applied only when that flag is absent from the
//! command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bench::{self, BenchInputs, Setting};
use crate::bm25::Bm25Error;
use crate::data::{load_example_pool, load_queries, load_train, ExamplePool, PoolSource};
use crate::embedder::{EmbedderConfig, EmbedderError, EmbedderParams};
use crate::eval::{self, ablate, AblationCell, AblationMode, EvalDataset, EvalError};
use crate::prompt::{FormatKind, PromptFormat};
use crate::retrieve::{read_run, run_inference, write_run, FlatIndex, InferenceConfig, RetrieveError};
use crate::synth::{self, SynthError, SynthSpec};
use crate::trainer::{train, PoolIndex, Selection, TrainConfig, TrainError};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "rare", version, about = "Retrieval with in-context examples")]
struct Cli {
    /// Flat `key = value` file supplying flags absent from the command line.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Repeat for more log output on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic benchmark into a directory.
    Synth(SynthArgs),
    /// Train an embedder contrastively.
    Train(TrainArgs),
    /// Embed a corpus into a flat index.
    Index(IndexArgs),
    /// Retrieve for a query set and write a TREC run file.
    Search(SearchArgs),
    /// Score a run (or run the pipeline) against qrels.
    Eval(EvalArgs),
    /// Evaluate a grid of settings and write a table.
    Ablate(AblateArgs),
    /// Time the stages of the inference pipeline.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
struct EmbedArgs {
    #[arg(long, default_value_t = crate::embedder::DEFAULT_HASH_DIM)]
    hash_dim: usize,
    #[arg(long, default_value_t = crate::embedder::DEFAULT_EMBED_DIM)]
    dim: usize,
    /// Comma-separated n-gram orders.
    #[arg(long, default_value = "1,2")]
    ngrams: String,
    #[arg(long)]
    max_tokens: Option<usize>,
    #[arg(long, default_value_t = 0)]
    hash_seed: u64,
}

impl EmbedArgs {
    fn config(&self) -> Result<EmbedderConfig, CliError> {
        let ngram_orders = self
            .ngrams
            .split(',')
            .map(|s| s.trim().parse::<u32>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| CliError::usage(format!("--ngrams: expected comma-separated integers, got `{}`", self.ngrams)))?;
        Ok(EmbedderConfig {
            hash_dim: self.hash_dim,
            embed_dim: self.dim,
            ngram_orders,
            hash_seed: self.hash_seed,
            max_tokens: self.max_tokens,
        })
    }
}

#[derive(Debug, Clone, Args, Serialize)]
struct FormatArgs {
    #[arg(long, default_value = "inst+ic")]
    format: FormatKind,
    /// Wrap query payloads in brackets.
    #[arg(long)]
    brackets: bool,
    #[arg(long, default_value_t = 0)]
    shuffle_seed: u64,
}

impl FormatArgs {
    fn format(&self) -> PromptFormat {
        PromptFormat {
            kind: self.format,
            bracket_queries: self.brackets,
            shuffle_seed: self.shuffle_seed,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    clusters: usize,
    #[arg(long, default_value_t = 40)]
    vocab: usize,
    #[arg(long, default_value_t = 200)]
    shared: usize,
    #[arg(long, default_value_t = 40)]
    docs: usize,
    #[arg(long, default_value_t = 20)]
    queries: usize,
    #[arg(long, default_value_t = 0.8)]
    ambiguity: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Example pool as `PATH` or `TASK=PATH`; repeatable. Without it, each
    /// task's pool is built from its own training triples.
    #[arg(long)]
    pool: Vec<String>,
    #[arg(long, default_value = "train")]
    pool_source: String,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0.01)]
    temp: f64,
    #[arg(long, default_value_t = 0.7)]
    mix: f64,
    #[arg(long, default_value = "retrieved")]
    select: Selection,
    #[command(flatten)]
    format: FormatArgs,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 5e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Drop hard negatives from the loss.
    #[arg(long)]
    no_hard_negative: bool,
    /// Also use other examples' hard negatives as in-batch negatives.
    #[arg(long)]
    in_batch_hard_negatives: bool,
    #[command(flatten)]
    embed: EmbedArgs,
    /// Start from an existing model instead of a random one.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Training log; defaults to `<out>.log.jsonl`.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct IndexArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
struct QueryArgs {
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long)]
    instruction: Option<String>,
    #[arg(long)]
    instruction_file: Option<PathBuf>,
    #[command(flatten)]
    format: FormatArgs,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value = "retrieved")]
    select: Selection,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
struct SearchArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    query: QueryArgs,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    #[arg(long, default_value = "rare")]
    tag: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
struct EvalArgs {
    /// TREC run file; without it the pipeline runs from `--model`,
    /// `--index` and `--queries`.
    #[arg(long)]
    run: Option<PathBuf>,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    index: Option<PathBuf>,
    #[command(flatten)]
    query: QueryArgs,
    #[arg(long, default_value_t = eval::DEFAULT_CUTOFF)]
    top_k: usize,
    #[arg(long, default_value = "dataset")]
    dataset: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
struct AblateArgs {
    /// Dataset directory; repeatable.
    #[arg(long, required = true)]
    dataset: Vec<PathBuf>,
    /// Training triples; one model is trained per cell.
    #[arg(long, conflicts_with = "model")]
    train: Option<PathBuf>,
    /// Fixed model evaluated under every cell.
    #[arg(long)]
    model: Option<PathBuf>,
    /// `k-sweep`, `selection`, `format`, `negatives`, or comma-separated
    /// cells `FORMAT:K[:TRAIN_SELECT[:EVAL_SELECT]]`.
    #[arg(long, default_value = "k-sweep")]
    grid: String,
    #[arg(long, default_value_t = 0)]
    eval_seed: u64,
    #[arg(long, default_value_t = 0.01)]
    temp: f64,
    #[arg(long, default_value_t = 0.7)]
    mix: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 5e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    embed: EmbedArgs,
    #[arg(long, default_value_t = eval::DEFAULT_CUTOFF)]
    top_k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
struct BenchArgs {
    /// Dataset directory with `corpus.jsonl`, `queries.jsonl` and `pool.jsonl`.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Prebuilt index; built from the corpus when absent.
    #[arg(long)]
    index: Option<PathBuf>,
    /// `inst` or `inst+ic`; repeatable. Defaults to both.
    #[arg(long)]
    setting: Vec<Setting>,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[command(flatten)]
    format: FormatArgs,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

fn train_code(e: &TrainError) -> i32 {
    match e {
        TrainError::NonFinite(_) => EXIT_NUMERIC,
        TrainError::NonPositiveTemperature(_) | TrainError::InvalidConfig(_) => EXIT_USAGE,
        TrainError::Embedder(e) => embedder_code(e),
        TrainError::Bm25(e) => bm25_code(e),
        _ => EXIT_DATA,
    }
}

fn embedder_code(e: &EmbedderError) -> i32 {
    match e {
        EmbedderError::NonFiniteParams => EXIT_NUMERIC,
        EmbedderError::InvalidConfig(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn bm25_code(e: &Bm25Error) -> i32 {
    match e {
        Bm25Error::InvalidParams(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn retrieve_code(e: &RetrieveError) -> i32 {
    match e {
        RetrieveError::MissingPool(_) => EXIT_USAGE,
        RetrieveError::Embedder(e) => embedder_code(e),
        RetrieveError::Selection(e) => train_code(e),
        _ => EXIT_DATA,
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Train(e) => train_code(e),
        Error::Embedder(e) => embedder_code(e),
        Error::Bm25(e) => bm25_code(e),
        Error::Retrieve(e) => retrieve_code(e),
        Error::Eval(e) => match e {
            EvalError::EmptyGrid | EvalError::InvalidWidth(_) | EvalError::MissingPool(_) => EXIT_USAGE,
            EvalError::Retrieve(e) => retrieve_code(e),
            EvalError::Train(e) => train_code(e),
            EvalError::Embedder(e) => embedder_code(e),
            _ => EXIT_DATA,
        },
        Error::Bench(e) => match e {
            bench::BenchError::NoRepetitions | bench::BenchError::MissingPool => EXIT_USAGE,
            bench::BenchError::Train(e) => train_code(e),
            bench::BenchError::Embedder(e) => embedder_code(e),
            bench::BenchError::Retrieve(e) => retrieve_code(e),
            _ => EXIT_DATA,
        },
        Error::Synth(SynthError::SpecInvalid(_)) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

impl<E: Into<Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        let e = e.into();
        Self {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to every output artifact.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<InputDigest>,
    pub version: String,
    pub timestamp: u64,
}

fn sha256_file(path: &Path) -> CliResult<String> {
    let mut file = fs::File::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file
            .read(&mut buf)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

struct Context {
    argv: Vec<String>,
}

impl Context {
    fn manifest<T: Serialize>(
        &self,
        subcommand: &str,
        args: &T,
        seeds: &[(&str, u64)],
        inputs: &[&Path],
    ) -> CliResult<RunManifest> {
        let inputs = inputs
            .iter()
            .map(|p| {
                Ok(InputDigest {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        Ok(RunManifest {
            command: self.argv.clone(),
            subcommand: subcommand.to_string(),
            config: serde_json::to_value(args).expect("arguments serialize"),
            seeds: seeds.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            inputs,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        })
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        return out.join("manifest.json");
    }
    sidecar(out, "manifest.json")
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_name().map(OsString::from).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    out.with_file_name(name)
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn write_manifest(out: &Path, manifest: &RunManifest) -> CliResult<()> {
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    write_file(&manifest_path(out), &(json + "\n"))
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim().trim_matches('"').to_string();
        if key.is_empty() {
            return Err(format!("line {}: empty key", i + 1));
        }
        pairs.push((key, value));
    }
    Ok(pairs)
}

fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

/// Appends config-file flags not already present in `argv`.
fn apply_config(argv: &mut Vec<String>) -> CliResult<()> {
    let Some(path) = config_path(argv) else {
        return Ok(());
    };
    let text = fs::read_to_string(&path).map_err(|e| CliError::data(format!("{path}: {e}")))?;
    let pairs = parse_config(&text).map_err(|e| CliError::usage(format!("{path}: {e}")))?;
    for (key, value) in pairs {
        let flag = format!("--{key}");
        let present = argv
            .iter()
            .any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if present {
            continue;
        }
        match value.as_str() {
            "true" => argv.push(flag),
            "false" => {}
            _ => {
                argv.push(flag);
                argv.push(value);
            }
        }
    }
    Ok(())
}

fn load_instruction(q: &QueryArgs) -> CliResult<String> {
    if let Some(text) = &q.instruction {
        return Ok(text.clone());
    }
    match &q.instruction_file {
        Some(path) => Ok(fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
            .trim()
            .to_string()),
        None => Ok(String::new()),
    }
}

fn load_pool(path: &Path, task: &str) -> CliResult<PoolIndex> {
    let pool = load_example_pool(path, task, PoolSource::TrainSplit)?;
    Ok(PoolIndex::new(pool)?)
}

fn inference_config(q: &QueryArgs, top_k: usize, threads: usize) -> InferenceConfig {
    InferenceConfig {
        format: q.format.format(),
        k: q.k,
        top_k,
        selection: q.select,
        seed: q.seed,
        threads,
    }
}

fn cmd_synth(ctx: &Context, a: &SynthArgs) -> CliResult<()> {
    let spec = SynthSpec {
        n_clusters: a.clusters,
        vocab_per_cluster: a.vocab,
        shared_vocab: a.shared,
        docs_per_cluster: a.docs,
        queries_per_cluster: a.queries,
        query_ambiguity: a.ambiguity,
        seed: a.seed,
        ..SynthSpec::default()
    };
    let data = synth::generate(&spec)?;
    synth::write_dir(&data, &a.out)?;
    let manifest = ctx.manifest("synth", a, &[("seed", a.seed)], &[])?;
    write_manifest(&a.out, &manifest)?;
    log::info!("wrote {} docs, {} queries to {}", data.corpus.len(), data.queries.len(), a.out.display());
    Ok(())
}

fn cmd_train(ctx: &Context, a: &TrainArgs) -> CliResult<()> {
    let train_set = load_train(&a.data)?;
    let source: PoolSource = a.pool_source.parse().map_err(CliError::usage)?;
    let mut pools = BTreeMap::new();
    let mut inputs: Vec<&Path> = vec![&a.data];
    let tasks: Vec<String> = {
        let mut t: Vec<String> = train_set.iter().map(|e| e.task_id.clone()).collect();
        t.sort();
        t.dedup();
        t
    };
    for spec in &a.pool {
        let (tasks_for, path) = match spec.split_once('=') {
            Some((task, path)) => (vec![task.to_string()], Path::new(path)),
            None => (tasks.clone(), Path::new(spec.as_str())),
        };
        inputs.push(path);
        for task in tasks_for {
            let pool = load_example_pool(path, &task, source)?;
            pools.insert(task, PoolIndex::new(pool)?);
        }
    }
    for task in &tasks {
        if !pools.contains_key(task) {
            pools.insert(task.clone(), PoolIndex::new(ExamplePool::from_train(task, &train_set))?);
        }
    }

    let init = match &a.init {
        Some(path) => {
            inputs.push(path);
            EmbedderParams::load(path)?
        }
        None => EmbedderParams::random(a.embed.config()?, a.seed)?,
    };
    let config = TrainConfig {
        k: a.k,
        temperature: a.temp,
        batch_size: a.batch,
        epochs: a.epochs,
        learning_rate: a.lr,
        ic_mixture: a.mix,
        selection: a.select,
        format: a.format.format(),
        seed: a.seed,
        use_hard_negative: !a.no_hard_negative,
        in_batch_hard_negatives: a.in_batch_hard_negatives,
    };
    let (params, log) = train(init, &train_set, &pools, &config)?;
    params.save(&a.out)?;
    let log_path = a.log.clone().unwrap_or_else(|| sidecar(&a.out, "log.jsonl"));
    write_file(&log_path, &log.to_jsonl())?;
    let manifest = ctx.manifest(
        "train",
        a,
        &[("seed", a.seed), ("shuffle_seed", a.format.shuffle_seed), ("hash_seed", a.embed.hash_seed)],
        &inputs,
    )?;
    write_manifest(&a.out, &manifest)
}

fn cmd_index(ctx: &Context, a: &IndexArgs, threads: usize) -> CliResult<()> {
    let corpus = crate::data::load_corpus(&a.corpus)?;
    let params = EmbedderParams::load(&a.model)?;
    let index = FlatIndex::build_parallel(&corpus, &params, threads)?;
    index.save(&a.out)?;
    let manifest = ctx.manifest("index", a, &[], &[&a.corpus, &a.model])?;
    write_manifest(&a.out, &manifest)
}

type QueryInputs<'a> = (Vec<crate::data::Query>, Option<PoolIndex>, String, Vec<&'a Path>);

fn search_inputs<'a>(q: &'a QueryArgs, model: &'a Path, index: &'a Path) -> CliResult<QueryInputs<'a>> {
    let queries_path = q
        .queries
        .as_deref()
        .ok_or_else(|| CliError::usage("--queries is required"))?;
    let queries = load_queries(queries_path)?;
    let pool = q.pool.as_deref().map(|p| load_pool(p, "pool")).transpose()?;
    let instruction = load_instruction(q)?;
    let mut inputs = vec![queries_path, model, index];
    inputs.extend(q.pool.as_deref());
    inputs.extend(q.instruction_file.as_deref());
    Ok((queries, pool, instruction, inputs))
}

fn cmd_search(ctx: &Context, a: &SearchArgs, threads: usize) -> CliResult<()> {
    let (queries, pool, instruction, inputs) = search_inputs(&a.query, &a.model, &a.index)?;
    let params = EmbedderParams::load(&a.model)?;
    let index = FlatIndex::load(&a.index)?;
    let config = inference_config(&a.query, a.top_k, threads);
    let run = run_inference(&queries, &instruction, pool.as_ref(), &index, &params, &config)?;
    write_run(&a.out, &run, &a.tag)?;
    let manifest = ctx.manifest(
        "search",
        a,
        &[("seed", a.query.seed), ("shuffle_seed", a.query.format.shuffle_seed)],
        &inputs,
    )?;
    write_manifest(&a.out, &manifest)
}

fn cmd_eval(ctx: &Context, a: &EvalArgs, threads: usize) -> CliResult<()> {
    let qrels = crate::data::load_qrels(&a.qrels)?;
    let mut inputs: Vec<&Path> = vec![&a.qrels];
    let (run, fingerprint) = match (&a.run, &a.model, &a.index) {
        (Some(run_path), _, _) => {
            inputs.push(run_path);
            (read_run(run_path)?, format!("run={}", run_path.display()))
        }
        (None, Some(model), Some(index_path)) => {
            let (queries, pool, instruction, more) = search_inputs(&a.query, model, index_path)?;
            inputs.extend(more);
            let params = EmbedderParams::load(model)?;
            let index = FlatIndex::load(index_path)?;
            let config = inference_config(&a.query, a.top_k, threads);
            let run = run_inference(&queries, &instruction, pool.as_ref(), &index, &params, &config)?;
            let fp = format!(
                "format={} brackets={} k={} selection={} seed={} K={}",
                config.format.kind, config.format.bracket_queries, config.k, config.selection, config.seed, config.top_k
            );
            (run, fp)
        }
        _ => return Err(CliError::usage("eval needs --run, or --model with --index and --queries")),
    };
    let mut report = eval::evaluate(&run, &qrels, a.top_k);
    report.dataset = a.dataset.clone();
    report.fingerprint = fingerprint;
    if report.n_without_relevant > 0 {
        log::warn!("{} queries have no relevant judgment and are excluded", report.n_without_relevant);
    }
    write_file(&a.out, &(report.to_json() + "\n"))?;
    match report.mean {
        Some(m) => println!("{} nDCG@{}: {m:.4} over {} queries", a.dataset, a.top_k, report.n_evaluated),
        None => println!("{} nDCG@{}: undefined (no judged queries)", a.dataset, a.top_k),
    }
    let manifest = ctx.manifest("eval", a, &[("seed", a.query.seed)], &inputs)?;
    write_manifest(&a.out, &manifest)
}

fn parse_cell(text: &str) -> CliResult<AblationCell> {
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    if parts.len() < 2 || parts.len() > 4 {
        return Err(CliError::usage(format!("bad grid cell `{text}`")));
    }
    let kind: FormatKind = parts[0].parse().map_err(CliError::usage)?;
    let k: usize = parts[1]
        .parse()
        .map_err(|_| CliError::usage(format!("bad k in grid cell `{text}`")))?;
    let train_sel: Selection = parts.get(2).map_or(Ok(Selection::Retrieved), |s| s.parse()).map_err(CliError::usage)?;
    let eval_sel: Selection = parts.get(3).map_or(Ok(train_sel), |s| s.parse()).map_err(CliError::usage)?;
    let mut cell = AblationCell::new(PromptFormat::new(kind), k, train_sel);
    cell.eval_selection = eval_sel;
    Ok(cell)
}

/// Named grids, or a comma-separated list of cells.
pub fn parse_grid(spec: &str) -> Result<Vec<AblationCell>, String> {
    let preset = |cells: &[&str]| -> Result<Vec<AblationCell>, String> {
        cells.iter().map(|c| parse_cell(c).map_err(|e| e.message)).collect()
    };
    match spec {
        "k-sweep" => preset(&["inst+ic:0", "inst+ic:1", "inst+ic:3", "inst+ic:5", "inst+ic:10"]),
        "selection" => preset(&[
            "inst+ic:5:retrieved:retrieved",
            "inst+ic:5:retrieved:random",
            "inst+ic:5:random:retrieved",
            "inst+ic:5:random:random",
        ]),
        "format" => preset(&[
            "inst+ic:5",
            "queries-only:5",
            "doc-only:5",
            "shuffle-nc:5",
            "shuffle-c:5",
        ]),
        "negatives" => preset(&["inst+ic:5", "inst+ic+neg:5"]),
        custom => preset(&custom.split(',').collect::<Vec<_>>()),
    }
}

fn cmd_ablate(ctx: &Context, a: &AblateArgs) -> CliResult<()> {
    let mut grid = parse_grid(&a.grid).map_err(CliError::usage)?;
    for cell in &mut grid {
        cell.eval_seed = a.eval_seed;
    }
    let mut inputs: Vec<&Path> = Vec::new();
    let mut datasets = Vec::new();
    for dir in &a.dataset {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        datasets.push(EvalDataset::load_dir(dir, &name)?);
    }
    let table = match (&a.train, &a.model) {
        (Some(train_path), _) => {
            inputs.push(train_path);
            let train_set = load_train(train_path)?;
            let mut tasks: Vec<&str> = train_set.iter().map(|e| e.task_id.as_str()).collect();
            tasks.sort_unstable();
            tasks.dedup();
            let mut pools = BTreeMap::new();
            for task in tasks {
                pools.insert(task.to_string(), PoolIndex::new(ExamplePool::from_train(task, &train_set))?);
            }
            let init = EmbedderParams::random(a.embed.config()?, a.seed)?;
            let config = TrainConfig {
                temperature: a.temp,
                batch_size: a.batch,
                epochs: a.epochs,
                learning_rate: a.lr,
                ic_mixture: a.mix,
                seed: a.seed,
                ..TrainConfig::default()
            };
            let mode = AblationMode::TrainPerCell {
                init: &init,
                train_set: &train_set,
                pools: &pools,
                config,
            };
            ablate(&grid, &datasets, &mode, a.top_k)?
        }
        (None, Some(model)) => {
            inputs.push(model);
            let params = EmbedderParams::load(model)?;
            ablate(&grid, &datasets, &AblationMode::FixedModel(&params), a.top_k)?
        }
        (None, None) => return Err(CliError::usage("ablate needs --train or --model")),
    };
    table.save_csv(&a.out)?;
    for row in &table.rows {
        let avg = row.average().map_or("-".to_string(), |v| format!("{v:.4}"));
        println!("{:<40} {avg}", row.setting);
    }
    let mut digests: Vec<PathBuf> = Vec::new();
    for dir in &a.dataset {
        for f in ["corpus.jsonl", "queries.jsonl", "qrels.tsv", "pool.jsonl", "instruction.txt"] {
            let p = dir.join(f);
            if p.exists() {
                digests.push(p);
            }
        }
    }
    inputs.extend(digests.iter().map(PathBuf::as_path));
    let manifest = ctx.manifest("ablate", a, &[("seed", a.seed), ("eval_seed", a.eval_seed)], &inputs)?;
    write_manifest(&a.out, &manifest)
}

fn cmd_bench(ctx: &Context, a: &BenchArgs, threads: usize) -> CliResult<()> {
    let name = a
        .dataset
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let dataset = EvalDataset::load_dir(&a.dataset, &name)?;
    let params = EmbedderParams::load(&a.model)?;
    let index = match &a.index {
        Some(p) => FlatIndex::load(p)?,
        None => FlatIndex::build(&dataset.corpus, &params)?,
    };
    let settings = if a.setting.is_empty() {
        vec![Setting::Inst, Setting::InstIC]
    } else {
        a.setting.clone()
    };
    let inputs = BenchInputs {
        dataset: &name,
        queries: &dataset.queries,
        instruction: &dataset.instruction,
        pool: dataset.pool.as_ref(),
        index: &index,
        params: &params,
        format: a.format.format(),
        k: a.k,
        top_k: a.top_k,
    };
    let mut reports = Vec::new();
    for setting in settings {
        reports.push(bench::profile_with(&inputs, setting, a.reps, a.warmup, threads)?);
    }
    bench::attach_inc_factors(&mut reports);
    let file = fs::File::create(&a.out).map_err(|e| CliError::data(format!("{}: {e}", a.out.display())))?;
    bench::emit_csv(&reports, file)?;
    for r in &reports {
        println!(
            "{} {:<8} nn={:.6}s query={:.6}s search={:.6}s total={:.6}s",
            r.dataset, r.setting, r.nn_s, r.query_s, r.search_s, r.total_s
        );
    }
    let mut digests = vec![a.model.as_path()];
    digests.extend(a.index.as_deref());
    let manifest = ctx.manifest("bench", a, &[], &digests)?;
    write_manifest(&a.out, &manifest)
}

/// Runs the command line and returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let mut argv: Vec<String> = args.into_iter().map(Into::into).collect();
    if let Err(e) = apply_config(&mut argv) {
        eprintln!("error: {}", e.message);
        return e.code;
    }
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();

    let ctx = Context { argv };
    let threads = cli.threads.max(1);
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Index(a) => cmd_index(&ctx, a, threads),
        Command::Search(a) => cmd_search(&ctx, a, threads),
        Command::Eval(a) => cmd_eval(&ctx, a, threads),
        Command::Ablate(a) => cmd_ablate(&ctx, a),
        Command::Bench(a) => cmd_bench(&ctx, a, threads),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args())
}
