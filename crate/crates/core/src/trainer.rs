//! Contrastive training with in-batch negatives, optionally on queries
//! augmented with BM25-retrieved in-context examples.
//!
//! For a query `q` with candidates `c_0 = d+, c_1, ..., c_{M-1}`:
//!
//! ```text
//! L = -log( exp(s_0 / τ) / Σ_c exp(s_c / τ) ),   s_c = cos(e_q, e_c)
//! ```
//!
//! Candidates are the positive, the hard negative (when enabled) and the
//! positives of the other batch items. Candidate texts are deduplicated, so a
//! batch item never sees a copy of its own positive as a negative.
//!
//! Gradients are exact: the chain runs softmax → cosine → L2 normalization →
//! projection, and lands on the columns of `W` touched by the batch.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bm25::{Bm25Error, Bm25Index, DEFAULT_B, DEFAULT_K1};
use crate::data::{ExamplePool, ICExample, TrainExample};
use crate::embedder::{dot, EmbedderError, EmbedderParams, Embedding, SparseVec};
use crate::prompt::{render_inst, render_inst_ic, AugmentedQuery, PromptError, PromptFormat};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty training set")]
    EmptyTrainSet,
    #[error("pool has {available} candidates after exclusion but {k} were requested")]
    PoolTooSmall { k: usize, available: usize },
    #[error("no example pool for task `{0}`")]
    MissingPool(String),
    #[error("training example {0} has no hard negative but the loss uses one")]
    MissingHardNegative(usize),
    #[error("non-finite {0} during training")]
    NonFinite(&'static str),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Embedder(#[from] EmbedderError),
    #[error(transparent)]
    Bm25(#[from] Bm25Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Selection {
    Retrieved,
    Random,
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selection::Retrieved => "retrieved",
            Selection::Random => "random",
        })
    }
}

impl FromStr for Selection {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "retrieved" => Ok(Selection::Retrieved),
            "random" => Ok(Selection::Random),
            other => Err(format!("unknown selection `{other}` (retrieved|random)")),
        }
    }
}

/// The parts of the configuration that define the loss itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub temperature: f64,
    pub use_hard_negative: bool,
    /// Also use the other items' hard negatives as in-batch negatives.
    pub in_batch_hard_negatives: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            temperature: 0.01,
            use_hard_negative: true,
            in_batch_hard_negatives: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub k: usize,
    pub temperature: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Probability that a training query is rendered with in-context examples.
    pub ic_mixture: f64,
    pub selection: Selection,
    pub format: PromptFormat,
    pub seed: u64,
    pub use_hard_negative: bool,
    pub in_batch_hard_negatives: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 5,
            temperature: 0.01,
            batch_size: 32,
            epochs: 5,
            learning_rate: 5e-4,
            ic_mixture: 0.7,
            selection: Selection::Retrieved,
            format: PromptFormat::default(),
            seed: 0,
            use_hard_negative: true,
            in_batch_hard_negatives: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return Err(TrainError::NonPositiveTemperature(self.temperature));
        }
        if !(0.0..=1.0).contains(&self.ic_mixture) {
            return Err(TrainError::InvalidConfig(format!(
                "mixture must be in [0, 1], got {}",
                self.ic_mixture
            )));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch size must be ≥ 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig(format!(
                "learning rate must be finite and ≥ 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            temperature: self.temperature,
            use_hard_negative: self.use_hard_negative,
            in_batch_hard_negatives: self.in_batch_hard_negatives,
        }
    }
}

/// `-log softmax(logits)[0]` with the max-subtraction trick, plus the softmax
/// probabilities.
fn softmax_nll(sims: &[f64], temperature: f64) -> (f64, Vec<f64>) {
    let logits: Vec<f64> = sims.iter().map(|s| s / temperature).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let lse = max + sum.ln();
    let probs = logits.iter().map(|z| (z - lse).exp()).collect();
    (lse - logits[0], probs)
}

pub fn contrastive_loss(
    query: &Embedding,
    positive: &Embedding,
    hard_negative: Option<&Embedding>,
    in_batch: &[Embedding],
    temperature: f64,
) -> Result<f64> {
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(TrainError::NonPositiveTemperature(temperature));
    }
    let dim = query.dim();
    let mut sims = Vec::with_capacity(2 + in_batch.len());
    for cand in std::iter::once(positive).chain(hard_negative).chain(in_batch) {
        if cand.dim() != dim {
            return Err(TrainError::DimMismatch(dim, cand.dim()));
        }
        sims.push(dot(&query.0, &cand.0));
    }
    Ok(softmax_nll(&sims, temperature).0)
}

/// One rendered training item.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchItem {
    pub query: String,
    pub positive: String,
    pub negative: Option<String>,
}

impl BatchItem {
    pub fn new(query: impl Into<String>, positive: impl Into<String>, negative: Option<String>) -> Self {
        Self {
            query: query.into(),
            positive: positive.into(),
            negative,
        }
    }
}

/// Gradient with respect to `W`, kept per touched hash bucket (column).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseGrad {
    pub embed_dim: usize,
    pub columns: BTreeMap<u32, Vec<f64>>,
}

impl SparseGrad {
    /// `∂L/∂W[row][bucket]`.
    pub fn get(&self, row: usize, bucket: usize) -> f64 {
        self.columns
            .get(&(bucket as u32))
            .map_or(0.0, |col| col[row])
    }

    /// Bucket-major dense copy, laid out like [`EmbedderParams::weights`].
    pub fn to_dense(&self, hash_dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; hash_dim * self.embed_dim];
        for (&bucket, col) in &self.columns {
            let start = bucket as usize * self.embed_dim;
            out[start..start + self.embed_dim].copy_from_slice(col);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.columns.values().flatten().all(|g| g.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.columns.values().flatten().all(|&g| g == 0.0)
    }

    /// `W ← W − lr · grad`.
    pub fn apply(&self, params: &mut EmbedderParams, learning_rate: f64) {
        let d = self.embed_dim;
        let weights = params.weights_mut();
        for (&bucket, col) in &self.columns {
            let start = bucket as usize * d;
            for (w, g) in weights[start..start + d].iter_mut().zip(col) {
                *w -= learning_rate * g;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub value: f64,
    pub grads: SparseGrad,
}

struct Encoded {
    features: SparseVec,
    norm: f64,
    unit: Vec<f64>,
}

fn encode(params: &EmbedderParams, text: &str) -> Result<Encoded> {
    let features = params.featurize(text);
    let u = params.project(&features);
    if u.iter().any(|x| !x.is_finite()) {
        return Err(EmbedderError::NonFiniteParams.into());
    }
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let unit = if norm > 0.0 { u.iter().map(|x| x / norm).collect() } else { u };
    Ok(Encoded { features, norm, unit })
}

/// Candidate text indices for each batch item, positive first.
fn candidates(items: &[(usize, usize, Option<usize>)], loss: &LossConfig) -> Vec<Vec<usize>> {
    items
        .iter()
        .enumerate()
        .map(|(i, &(_, pos, neg))| {
            let mut cands = vec![pos];
            let push = |t: usize, cands: &mut Vec<usize>| {
                if !cands.contains(&t) {
                    cands.push(t);
                }
            };
            if loss.use_hard_negative {
                if let Some(n) = neg {
                    push(n, &mut cands);
                }
            }
            for (j, &(_, other_pos, other_neg)) in items.iter().enumerate() {
                if j == i {
                    continue;
                }
                push(other_pos, &mut cands);
                if loss.in_batch_hard_negatives {
                    if let Some(n) = other_neg {
                        push(n, &mut cands);
                    }
                }
            }
            cands
        })
        .collect()
}

fn intern<'a>(text: &'a str, texts: &mut Vec<&'a str>, ids: &mut HashMap<&'a str, usize>) -> usize {
    *ids.entry(text).or_insert_with(|| {
        texts.push(text);
        texts.len() - 1
    })
}

/// Mean loss over the batch and its exact gradient with respect to `W`.
pub fn batch_grads(batch: &[BatchItem], params: &EmbedderParams, loss: &LossConfig) -> Result<BatchLoss> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    if loss.temperature.is_nan() || loss.temperature <= 0.0 {
        return Err(TrainError::NonPositiveTemperature(loss.temperature));
    }
    let d = params.embed_dim();

    // Unique texts, in first-seen order.
    let mut texts: Vec<&str> = Vec::new();
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let items: Vec<(usize, usize, Option<usize>)> = batch
        .iter()
        .map(|item| {
            let q = intern(&item.query, &mut texts, &mut ids);
            let p = intern(&item.positive, &mut texts, &mut ids);
            let n = item
                .negative
                .as_deref()
                .filter(|n| !n.is_empty())
                .map(|n| intern(n, &mut texts, &mut ids));
            (q, p, n)
        })
        .collect();

    let encoded = texts
        .iter()
        .map(|t| encode(params, t))
        .collect::<Result<Vec<_>>>()?;
    let cand_lists = candidates(&items, loss);

    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut grad_e = vec![vec![0.0; d]; texts.len()];
    for (&(q, _, _), cands) in items.iter().zip(&cand_lists) {
        let eq = &encoded[q].unit;
        let sims: Vec<f64> = cands.iter().map(|&c| dot(eq, &encoded[c].unit)).collect();
        let (value, probs) = softmax_nll(&sims, loss.temperature);
        total += value;
        for (idx, (&c, p)) in cands.iter().zip(&probs).enumerate() {
            let target = if idx == 0 { 1.0 } else { 0.0 };
            let ds = scale * (p - target) / loss.temperature;
            if ds == 0.0 {
                continue;
            }
            let ec = encoded[c].unit.clone();
            for j in 0..d {
                grad_e[q][j] += ds * ec[j];
                grad_e[c][j] += ds * eq[j];
            }
        }
    }
    let value = total * scale;
    if !value.is_finite() {
        return Err(TrainError::NonFinite("loss"));
    }

    let mut grads = SparseGrad {
        embed_dim: d,
        columns: BTreeMap::new(),
    };
    for (enc, ge) in encoded.iter().zip(&grad_e) {
        if enc.norm == 0.0 || ge.iter().all(|&g| g == 0.0) {
            continue;
        }
        // ∂e/∂u = (I − e eᵀ) / ‖u‖
        let proj = dot(&enc.unit, ge);
        let gu: Vec<f64> = ge
            .iter()
            .zip(&enc.unit)
            .map(|(g, e)| (g - e * proj) / enc.norm)
            .collect();
        for &(bucket, x) in &enc.features.entries {
            let col = grads.columns.entry(bucket).or_insert_with(|| vec![0.0; d]);
            for (acc, g) in col.iter_mut().zip(&gu) {
                *acc += x * g;
            }
        }
    }
    Ok(BatchLoss { value, grads })
}

/// An example pool with a BM25 index over its queries.
#[derive(Debug, Clone)]
pub struct PoolIndex {
    pub pool: ExamplePool,
    pub index: Bm25Index,
    first_by_query: HashMap<String, usize>,
}

impl PoolIndex {
    pub fn new(pool: ExamplePool) -> Result<Self> {
        Self::with_params(pool, DEFAULT_K1, DEFAULT_B)
    }

    pub fn with_params(pool: ExamplePool, k1: f64, b: f64) -> Result<Self> {
        let queries: Vec<&str> = pool.examples.iter().map(|ex| ex.query.as_str()).collect();
        let index = Bm25Index::build(&queries, k1, b)?;
        let mut first_by_query = HashMap::new();
        for (i, q) in queries.iter().enumerate() {
            first_by_query.entry(q.to_string()).or_insert(i);
        }
        Ok(Self {
            pool,
            index,
            first_by_query,
        })
    }

    /// Ordinal of the first pool example whose query equals `query`.
    pub fn ordinal_of(&self, query: &str) -> Option<usize> {
        self.first_by_query.get(query).copied()
    }

    pub fn len(&self) -> usize {
        self.pool.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pool.is_empty()
    }
}

pub fn select_examples<R: Rng + ?Sized>(
    pool: &ExamplePool,
    index: &Bm25Index,
    query: &str,
    k: usize,
    policy: Selection,
    exclude: Option<usize>,
    rng: &mut R,
) -> Result<Vec<ICExample>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let excluded = usize::from(exclude.is_some_and(|e| e < pool.len()));
    let available = pool.len() - excluded;
    if available < k {
        return Err(TrainError::PoolTooSmall { k, available });
    }
    let ordinals: Vec<usize> = match policy {
        Selection::Retrieved => index
            .top_k_neighbors(query, k, exclude)
            .into_iter()
            .map(|(o, _)| o)
            .collect(),
        Selection::Random => rand::seq::index::sample(rng, available, k)
            .into_iter()
            .map(|i| match exclude {
                Some(e) if i >= e => i + 1,
                _ => i,
            })
            .collect(),
    };
    Ok(ordinals.into_iter().map(|o| pool.examples[o].clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub n_ic: usize,
    pub n_plain: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|e| serde_json::to_string(e).expect("epoch log serializes") + "\n")
            .collect()
    }
}

/// Passed to the render hook for every training query.
#[derive(Debug)]
pub struct RenderEvent<'a> {
    pub epoch: usize,
    pub example: usize,
    pub query: &'a AugmentedQuery,
}

struct Streams {
    order: ChaCha8Rng,
    coin: ChaCha8Rng,
    select: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |id: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        Self {
            order: stream(1),
            coin: stream(2),
            select: stream(3),
        }
    }
}

fn check_inputs(train: &[TrainExample], pools: &BTreeMap<String, PoolIndex>, config: &TrainConfig) -> Result<()> {
    config.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    let needs_pool = config.format.kind.uses_examples() && config.k > 0 && config.ic_mixture > 0.0;
    for (i, ex) in train.iter().enumerate() {
        if config.use_hard_negative && ex.negative.is_empty() {
            return Err(TrainError::MissingHardNegative(i));
        }
        if needs_pool && !pools.contains_key(&ex.task_id) {
            return Err(TrainError::MissingPool(ex.task_id.clone()));
        }
    }
    Ok(())
}

fn render_training_query(
    ex: &TrainExample,
    pools: &BTreeMap<String, PoolIndex>,
    config: &TrainConfig,
    streams: &mut Streams,
) -> Result<AugmentedQuery> {
    let with_ic = streams.coin.random::<f64>() < config.ic_mixture;
    if !with_ic || !config.format.kind.uses_examples() {
        return Ok(render_inst(&ex.instruction, &ex.query)?);
    }
    let pool = pools
        .get(&ex.task_id)
        .ok_or_else(|| TrainError::MissingPool(ex.task_id.clone()))?;
    let exclude = pool.ordinal_of(&ex.query);
    let examples = select_examples(
        &pool.pool,
        &pool.index,
        &ex.query,
        config.k,
        config.selection,
        exclude,
        &mut streams.select,
    )?;
    Ok(render_inst_ic(&ex.instruction, &examples, &ex.query, config.format)?)
}

fn to_item(ex: &TrainExample, query: String, loss: &LossConfig) -> BatchItem {
    let negative = (loss.use_hard_negative && !ex.negative.is_empty()).then(|| ex.negative.clone());
    BatchItem::new(query, ex.positive.clone(), negative)
}

pub fn train(
    init: EmbedderParams,
    train_set: &[TrainExample],
    pools: &BTreeMap<String, PoolIndex>,
    config: &TrainConfig,
) -> Result<(EmbedderParams, TrainLog)> {
    train_with_hook(init, train_set, pools, config, &mut |_| {})
}

pub fn train_with_hook(
    init: EmbedderParams,
    train_set: &[TrainExample],
    pools: &BTreeMap<String, PoolIndex>,
    config: &TrainConfig,
    hook: &mut dyn FnMut(&RenderEvent<'_>),
) -> Result<(EmbedderParams, TrainLog)> {
    check_inputs(train_set, pools, config)?;
    let loss = config.loss();
    let mut params = init;
    let mut streams = Streams::new(config.seed);
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut streams.order);
        let (mut loss_sum, mut n_ic, mut n_plain) = (0.0, 0, 0);
        for chunk in order.chunks(config.batch_size) {
            let mut batch = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let ex = &train_set[i];
                let rendered = render_training_query(ex, pools, config, &mut streams)?;
                hook(&RenderEvent {
                    epoch,
                    example: i,
                    query: &rendered,
                });
                if rendered.n_examples > 0 {
                    n_ic += 1;
                } else {
                    n_plain += 1;
                }
                batch.push(to_item(ex, rendered.text, &loss));
            }
            let out = batch_grads(&batch, &params, &loss)?;
            if !out.grads.is_finite() {
                return Err(TrainError::NonFinite("gradient"));
            }
            loss_sum += out.value * chunk.len() as f64;
            if config.learning_rate != 0.0 {
                out.grads.apply(&mut params, config.learning_rate);
            }
        }
        let mean_loss = loss_sum / train_set.len() as f64;
        log::info!("epoch {epoch}: mean loss {mean_loss:.6} ({n_ic} with examples, {n_plain} plain)");
        log.epochs.push(EpochLog {
            epoch,
            mean_loss,
            n_ic,
            n_plain,
        });
    }
    if !params.is_finite() {
        return Err(TrainError::NonFinite("parameters"));
    }
    Ok((params, log))
}

/// Mean loss of `params` over the whole training set, rendered as the first
/// training epoch would render it, without updating anything.
pub fn dataset_loss(
    params: &EmbedderParams,
    train_set: &[TrainExample],
    pools: &BTreeMap<String, PoolIndex>,
    config: &TrainConfig,
) -> Result<f64> {
    check_inputs(train_set, pools, config)?;
    let loss = config.loss();
    let mut streams = Streams::new(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    order.shuffle(&mut streams.order);
    let mut total = 0.0;
    for chunk in order.chunks(config.batch_size) {
        let batch = chunk
            .iter()
            .map(|&i| {
                let ex = &train_set[i];
                render_training_query(ex, pools, config, &mut streams).map(|r| to_item(ex, r.text, &loss))
            })
            .collect::<Result<Vec<_>>>()?;
        total += batch_grads(&batch, params, &loss)?.value * chunk.len() as f64;
    }
    Ok(total / train_set.len() as f64)
}
