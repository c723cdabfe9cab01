//! Hashed n-gram features followed by a learnable linear projection and L2
//! normalization.
//!
//! `embed(text) = normalize(W · featurize(text))` where `featurize` counts
//! seeded-hash buckets of the configured n-gram orders and divides by the
//! total n-gram count. The projection `W` is `D x V`; it is stored one
//! column per hash bucket (`weights[v * D .. (v + 1) * D]`), which is the
//! access pattern of a sparse input.
//!
//! # `RARE1` layout
//!
//! ```text
//! "RARE1" | u32 version (=1) | u64 V | u64 D | u64 hash_seed
//! u32 n_orders | n_orders x u32 order | u64 max_tokens (0 = unlimited)
//! V*D x f64 weights, bucket-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bm25::tokenize;
use crate::codec::{FormatError, Reader, Writer};

const MAGIC: &str = "RARE1";
const VERSION: u32 = 1;

pub const DEFAULT_HASH_DIM: usize = 1 << 16;
pub const DEFAULT_EMBED_DIM: usize = 64;

#[derive(Debug, Error)]
pub enum EmbedderError {
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("model parameters contain non-finite values")]
    NonFiniteParams,
    #[error("invalid embedder configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub hash_dim: usize,
    pub embed_dim: usize,
    pub ngram_orders: Vec<u32>,
    pub hash_seed: u64,
    pub max_tokens: Option<usize>,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            hash_dim: DEFAULT_HASH_DIM,
            embed_dim: DEFAULT_EMBED_DIM,
            ngram_orders: vec![1, 2],
            hash_seed: 0,
            max_tokens: None,
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<(), EmbedderError> {
        if self.hash_dim == 0 || self.embed_dim == 0 {
            return Err(EmbedderError::InvalidConfig("hash_dim and embed_dim must be ≥ 1".into()));
        }
        if self.hash_dim > u32::MAX as usize {
            return Err(EmbedderError::InvalidConfig("hash_dim must fit in 32 bits".into()));
        }
        if self.ngram_orders.is_empty() || self.ngram_orders.contains(&0) {
            return Err(EmbedderError::InvalidConfig("n-gram orders must be nonempty and ≥ 1".into()));
        }
        Ok(())
    }

    fn canonical(mut self) -> Self {
        self.ngram_orders.sort_unstable();
        self.ngram_orders.dedup();
        self
    }
}

/// Sparse nonnegative feature vector, sorted by bucket with no repeats.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVec {
    pub entries: Vec<(u32, f64)>,
}

impl SparseVec {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w).sum()
    }

    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for &(i, w) in &self.entries {
            out[i as usize] += w;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine of two embeddings. Both are unit or zero, so this is their dot
/// product; a zero vector yields 0.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64, EmbedderError> {
    if a.dim() != b.dim() {
        return Err(EmbedderError::DimMismatch(a.dim(), b.dim()));
    }
    if a.is_zero() || b.is_zero() {
        return Ok(0.0);
    }
    Ok(dot(&a.0, &b.0).clamp(-1.0, 1.0))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeded FNV-1a over the gram's tokens, 0x1f-separated, then a splitmix
/// finalizer. Tokens never contain 0x1f since it is Unicode whitespace.
fn hash_gram(seed: u64, gram: &[String]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325 ^ splitmix64(seed);
    for tok in gram {
        for b in tok.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h ^= 0x1f;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedderParams {
    config: EmbedderConfig,
    weights: Vec<f64>,
}

impl EmbedderParams {
    /// Fresh parameters with `W` drawn i.i.d. from `U[-1/√V, 1/√V]`.
    pub fn random(config: EmbedderConfig, init_seed: u64) -> Result<Self, EmbedderError> {
        let config = config.canonical();
        config.validate()?;
        let bound = 1.0 / (config.hash_dim as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let weights = (0..config.hash_dim * config.embed_dim)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Ok(Self { config, weights })
    }

    pub fn from_weights(config: EmbedderConfig, weights: Vec<f64>) -> Result<Self, EmbedderError> {
        let config = config.canonical();
        config.validate()?;
        if weights.len() != config.hash_dim * config.embed_dim {
            return Err(EmbedderError::InvalidConfig(format!(
                "expected {} weights, got {}",
                config.hash_dim * config.embed_dim,
                weights.len()
            )));
        }
        Ok(Self { config, weights })
    }

    pub fn config(&self) -> &EmbedderConfig {
        &self.config
    }

    pub fn hash_dim(&self) -> usize {
        self.config.hash_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    /// Bucket-major weights: entry `v * D + j` is `W[j][v]`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn column(&self, bucket: usize) -> &[f64] {
        let d = self.config.embed_dim;
        &self.weights[bucket * d..(bucket + 1) * d]
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            config: self.config.clone(),
            weights: self.weights.iter().map(|w| w * factor).collect(),
        }
    }

    pub fn featurize(&self, text: &str) -> SparseVec {
        let mut tokens = tokenize(text).0;
        if let Some(m) = self.config.max_tokens {
            tokens.truncate(m);
        }
        let v = self.config.hash_dim as u64;
        let mut buckets: Vec<u32> = Vec::new();
        for &order in &self.config.ngram_orders {
            let n = order as usize;
            if tokens.len() < n {
                continue;
            }
            for gram in tokens.windows(n) {
                buckets.push((hash_gram(self.config.hash_seed, gram) % v) as u32);
            }
        }
        if buckets.is_empty() {
            return SparseVec::default();
        }
        let total = buckets.len() as f64;
        buckets.sort_unstable();
        let mut entries: Vec<(u32, f64)> = Vec::new();
        for b in buckets {
            match entries.last_mut() {
                Some((last, count)) if *last == b => *count += 1.0,
                _ => entries.push((b, 1.0)),
            }
        }
        for (_, w) in &mut entries {
            *w /= total;
        }
        SparseVec { entries }
    }

    /// `W · x` for a sparse `x`.
    pub fn project(&self, x: &SparseVec) -> Vec<f64> {
        let d = self.config.embed_dim;
        let mut u = vec![0.0; d];
        for &(bucket, w) in &x.entries {
            let col = self.column(bucket as usize);
            for (acc, c) in u.iter_mut().zip(col) {
                *acc += w * c;
            }
        }
        u
    }

    pub fn embed(&self, text: &str) -> Result<Embedding, EmbedderError> {
        self.embed_features(&self.featurize(text))
    }

    pub fn embed_features(&self, x: &SparseVec) -> Result<Embedding, EmbedderError> {
        let u = self.project(x);
        normalize(u)
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<W, EmbedderError> {
        let io = |e: std::io::Error| EmbedderError::Format(FormatError::Io(e));
        let mut w = Writer::new(out);
        w.bytes(MAGIC.as_bytes()).map_err(io)?;
        w.u32(VERSION).map_err(io)?;
        w.u64(self.config.hash_dim as u64).map_err(io)?;
        w.u64(self.config.embed_dim as u64).map_err(io)?;
        w.u64(self.config.hash_seed).map_err(io)?;
        w.u32(self.config.ngram_orders.len() as u32).map_err(io)?;
        for &o in &self.config.ngram_orders {
            w.u32(o).map_err(io)?;
        }
        w.u64(self.config.max_tokens.map_or(0, |m| m as u64)).map_err(io)?;
        for &x in &self.weights {
            w.f64(x).map_err(io)?;
        }
        w.finish().map_err(io)
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self, EmbedderError> {
        let mut r = Reader::new(input);
        r.magic(MAGIC)?;
        r.version(VERSION)?;
        let hash_dim = r.len(u64::from(u32::MAX))?;
        let embed_dim = r.len(1 << 16)?;
        let hash_seed = r.u64()?;
        let n_orders = r.u32()?;
        if n_orders > 16 {
            return Err(FormatError::Corrupt(format!("{n_orders} n-gram orders")).into());
        }
        let ngram_orders = (0..n_orders).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        let max_tokens = match r.u64()? {
            0 => None,
            m => Some(m as usize),
        };
        let config = EmbedderConfig {
            hash_dim,
            embed_dim,
            ngram_orders,
            hash_seed,
            max_tokens,
        };
        config
            .validate()
            .map_err(|e| FormatError::Corrupt(e.to_string()))?;
        let n = hash_dim
            .checked_mul(embed_dim)
            .ok_or_else(|| FormatError::Corrupt("weight count overflows".into()))?;
        let mut weights = Vec::with_capacity(n.min(1 << 26));
        for _ in 0..n {
            weights.push(r.f64()?);
        }
        r.expect_eof()?;
        Ok(Self { config, weights })
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbedderError> {
        let file = File::create(path).map_err(FormatError::Io)?;
        self.write_to(BufWriter::new(file))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EmbedderError> {
        let file = File::open(path).map_err(FormatError::Io)?;
        Self::read_from(BufReader::new(file))
    }
}

pub(crate) fn normalize(u: Vec<f64>) -> Result<Embedding, EmbedderError> {
    if u.iter().any(|x| !x.is_finite()) {
        return Err(EmbedderError::NonFiniteParams);
    }
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        Ok(Embedding(u.into_iter().map(|x| x / norm).collect()))
    } else {
        Ok(Embedding(u))
    }
}
