//! nDCG@K evaluation, ablation grids and Score@Top-1 bucketing.
//!
//! `DCG@K = Σ_{r=1..K} (2^grade − 1) / log2(r + 1)`, normalized by the DCG of
//! the ideal ordering of the judged grades. Unjudged documents have gain 0.
//! Queries without any relevant judgment are left out of means and counted
//! separately.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    load_corpus, load_example_pool, load_qrels, load_queries, DataError, Document, PoolSource, QRels, Query,
    TrainExample,
};
use crate::embedder::{cosine, EmbedderError, EmbedderParams};
use crate::prompt::PromptFormat;
use crate::retrieve::{run_inference, FlatIndex, InferenceConfig, RankedList, RetrieveError};
use crate::trainer::{train, PoolIndex, Selection, TrainConfig, TrainError};

pub const DEFAULT_CUTOFF: usize = 10;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("ablation grid is empty")]
    EmptyGrid,
    #[error("example pool is empty")]
    EmptyPool,
    #[error("bucket width must be in (0, 1], got {0}")]
    InvalidWidth(f64),
    #[error("dataset `{0}` has no example pool but the cell needs one")]
    MissingPool(String),
    #[error(transparent)]
    Retrieve(#[from] RetrieveError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Embedder(#[from] EmbedderError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;

fn gain(grade: u32) -> f64 {
    2f64.powi(grade as i32) - 1.0
}

fn discount(rank: usize) -> f64 {
    ((rank + 1) as f64).log2()
}

pub fn has_relevant(judged: &BTreeMap<String, u32>) -> bool {
    judged.values().any(|&g| g > 0)
}

pub fn ndcg_at_k(ranked: &RankedList, judged: &BTreeMap<String, u32>, k: usize) -> f64 {
    let k = k.max(1);
    let dcg: f64 = ranked
        .entries
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, (id, _))| judged.get(id).map_or(0.0, |&g| gain(g)) / discount(i + 1))
        .sum();
    let mut grades: Vec<u32> = judged.values().copied().filter(|&g| g > 0).collect();
    grades.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain(g) / discount(i + 1))
        .sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub k: usize,
    pub per_query: BTreeMap<String, f64>,
    /// `None` when no query had a relevant judgment.
    pub mean: Option<f64>,
    pub n_evaluated: usize,
    pub n_without_relevant: usize,
    pub fingerprint: String,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn evaluate(run: &BTreeMap<String, RankedList>, qrels: &QRels, k: usize) -> EvalReport {
    let mut per_query = BTreeMap::new();
    let mut n_without_relevant = 0;
    for (qid, ranked) in run {
        match qrels.get(qid).filter(|j| has_relevant(j)) {
            Some(judged) => {
                per_query.insert(qid.clone(), ndcg_at_k(ranked, judged, k));
            }
            None => n_without_relevant += 1,
        }
    }
    let mean = (!per_query.is_empty()).then(|| per_query.values().sum::<f64>() / per_query.len() as f64);
    EvalReport {
        dataset: String::new(),
        k,
        n_evaluated: per_query.len(),
        per_query,
        mean,
        n_without_relevant,
        fingerprint: String::new(),
    }
}

/// Mean of a table row, `None` if any cell is missing.
pub fn row_average(cells: &[Option<f64>]) -> Option<f64> {
    if cells.is_empty() {
        return None;
    }
    let values: Option<Vec<f64>> = cells.iter().copied().collect();
    values.map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

/// One evaluation dataset of an ablation run.
#[derive(Debug, Clone)]
pub struct EvalDataset {
    pub name: String,
    pub instruction: String,
    pub corpus: Vec<Document>,
    pub queries: Vec<Query>,
    pub qrels: QRels,
    pub pool: Option<PoolIndex>,
}

impl EvalDataset {
    /// Loads a dataset directory: `corpus.jsonl`, `queries.jsonl`,
    /// `qrels.tsv`, and optionally `pool.jsonl` and `instruction.txt`.
    pub fn load_dir(dir: &Path, name: &str) -> std::result::Result<Self, DataError> {
        let corpus = load_corpus(&dir.join("corpus.jsonl"))?;
        let queries = load_queries(&dir.join("queries.jsonl"))?;
        let qrels = load_qrels(&dir.join("qrels.tsv"))?;
        let pool_path = dir.join("pool.jsonl");
        let pool = if pool_path.exists() {
            let pool = load_example_pool(&pool_path, name, PoolSource::TrainSplit)?;
            Some(PoolIndex::new(pool).map_err(|e| DataError::Invalid(e.to_string()))?)
        } else {
            None
        };
        let inst_path = dir.join("instruction.txt");
        let instruction = if inst_path.exists() {
            std::fs::read_to_string(&inst_path)
                .map_err(|source| DataError::Io { path: inst_path.clone(), source })?
                .trim()
                .to_string()
        } else {
            String::new()
        };
        Ok(Self {
            name: name.to_string(),
            instruction,
            corpus,
            queries,
            qrels,
            pool,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationCell {
    pub format: PromptFormat,
    pub k: usize,
    pub train_selection: Selection,
    pub eval_selection: Selection,
    pub eval_seed: u64,
    pub label: Option<String>,
}

impl AblationCell {
    pub fn new(format: PromptFormat, k: usize, selection: Selection) -> Self {
        Self {
            format,
            k,
            train_selection: selection,
            eval_selection: selection,
            eval_seed: 0,
            label: None,
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            format!(
                "{} k={} ({}, {})",
                self.format.kind, self.k, self.train_selection, self.eval_selection
            )
        })
    }
}

/// How an ablation grid uses the model.
#[derive(Debug, Clone)]
pub enum AblationMode<'a> {
    /// Train one model per cell with that cell's format, k and selection.
    TrainPerCell {
        init: &'a EmbedderParams,
        train_set: &'a [TrainExample],
        pools: &'a BTreeMap<String, PoolIndex>,
        config: TrainConfig,
    },
    /// Evaluate one fixed model under each cell's evaluation settings.
    FixedModel(&'a EmbedderParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub setting: String,
    pub reports: Vec<EvalReport>,
}

impl AblationRow {
    pub fn cells(&self) -> Vec<Option<f64>> {
        self.reports.iter().map(|r| r.mean).collect()
    }

    pub fn average(&self) -> Option<f64> {
        row_average(&self.cells())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub datasets: Vec<String>,
    pub rows: Vec<AblationRow>,
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl AblationTable {
    /// CSV with header `Setting, <datasets...>, Average`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["Setting".to_string()];
        header.extend(self.datasets.iter().cloned());
        header.push("Average".into());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.setting.clone()];
            rec.extend(row.cells().into_iter().map(fmt_cell));
            rec.push(fmt_cell(row.average()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Runs inference for one dataset under `config` and scores it.
pub fn evaluate_dataset(
    dataset: &EvalDataset,
    index: &FlatIndex,
    params: &EmbedderParams,
    config: &InferenceConfig,
) -> Result<EvalReport> {
    if config.format.kind.uses_examples() && config.k > 0 && dataset.pool.is_none() {
        return Err(EvalError::MissingPool(dataset.name.clone()));
    }
    let run = run_inference(
        &dataset.queries,
        &dataset.instruction,
        dataset.pool.as_ref(),
        index,
        params,
        config,
    )?;
    let mut report = evaluate(&run, &dataset.qrels, config.top_k);
    report.dataset = dataset.name.clone();
    report.fingerprint = format!(
        "format={} brackets={} k={} selection={} seed={} K={}",
        config.format.kind, config.format.bracket_queries, config.k, config.selection, config.seed, config.top_k
    );
    Ok(report)
}

pub fn ablate(
    grid: &[AblationCell],
    datasets: &[EvalDataset],
    mode: &AblationMode<'_>,
    top_k: usize,
) -> Result<AblationTable> {
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let fixed_indexes = match mode {
        AblationMode::FixedModel(params) => Some(
            datasets
                .iter()
                .map(|d| FlatIndex::build(&d.corpus, params))
                .collect::<std::result::Result<Vec<_>, _>>()?,
        ),
        AblationMode::TrainPerCell { .. } => None,
    };
    let mut rows = Vec::with_capacity(grid.len());
    for cell in grid {
        let trained;
        let (params, indexes) = match mode {
            AblationMode::FixedModel(params) => (*params, fixed_indexes.clone().expect("built above")),
            AblationMode::TrainPerCell {
                init,
                train_set,
                pools,
                config,
            } => {
                let config = TrainConfig {
                    format: cell.format,
                    k: cell.k,
                    selection: cell.train_selection,
                    ..config.clone()
                };
                trained = train((*init).clone(), train_set, pools, &config)?.0;
                let indexes = datasets
                    .iter()
                    .map(|d| FlatIndex::build(&d.corpus, &trained))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                (&trained, indexes)
            }
        };
        let inference = InferenceConfig {
            format: cell.format,
            k: cell.k,
            top_k,
            selection: cell.eval_selection,
            seed: cell.eval_seed,
            threads: 1,
        };
        let reports = datasets
            .iter()
            .zip(&indexes)
            .map(|(d, idx)| evaluate_dataset(d, idx, params, &inference))
            .collect::<Result<Vec<_>>>()?;
        rows.push(AblationRow {
            setting: cell.label(),
            reports,
        });
    }
    Ok(AblationTable {
        datasets: datasets.iter().map(|d| d.name.clone()).collect(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBucket {
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    /// Mean per-query nDCG difference (first run minus second) in the bucket;
    /// `None` for an empty bucket.
    pub mean_ndcg: Option<f64>,
}

/// Cosine between each query and its BM25-nearest pool query, both encoded
/// with `params`.
pub fn score_at_top1(queries: &[Query], pool: &PoolIndex, params: &EmbedderParams) -> Result<Vec<(String, f64)>> {
    if pool.is_empty() {
        return Err(EvalError::EmptyPool);
    }
    queries
        .iter()
        .map(|q| {
            let top = pool.index.top_k_neighbors(&q.text, 1, None);
            let neighbor = &pool.pool.examples[top[0].0].query;
            let s = cosine(&params.embed(&q.text)?, &params.embed(neighbor)?)?;
            Ok((q.id.clone(), s))
        })
        .collect()
}

/// Groups queries by Score@Top-1 into equal-width bins over `[0, 1]` and
/// averages the per-query nDCG delta `a − b` in each bin. Only queries scored
/// in both reports are counted; scores below 0 fall in the first bin.
pub fn bucketize(scores: &[(String, f64)], a: &EvalReport, b: &EvalReport, width: f64) -> Result<Vec<ScoreBucket>> {
    if !(width > 0.0 && width <= 1.0) {
        return Err(EvalError::InvalidWidth(width));
    }
    let n_bins = ((1.0 / width) - 1e-9).ceil().max(1.0) as usize;
    let mut sums = vec![(0usize, 0.0f64); n_bins];
    for (qid, score) in scores {
        let (Some(x), Some(y)) = (a.per_query.get(qid), b.per_query.get(qid)) else {
            continue;
        };
        let s = score.clamp(0.0, 1.0);
        let bin = ((s / width).floor() as usize).min(n_bins - 1);
        sums[bin].0 += 1;
        sums[bin].1 += x - y;
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(i, (n, total))| ScoreBucket {
            lower: i as f64 * width,
            upper: ((i + 1) as f64 * width).min(1.0),
            n,
            mean_ndcg: (n > 0).then(|| total / n as f64),
        })
        .collect())
}
