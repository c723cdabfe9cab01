//! Exact dense search over document embeddings and the end-to-end inference
//! pipeline: example retrieval, query augmentation, encoding, top-K search.
//!
//! # `RFI1` layout
//!
//! ```text
//! "RFI1" | u32 version (=1) | u64 n | u64 D
//! n x (u32 byte len | utf-8 doc id)
//! n*D x f64, row-major
//! ```

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codec::{FormatError, Reader, Writer};
use crate::data::{Document, Query};
use crate::embedder::{dot, EmbedderError, EmbedderParams, Embedding};
use crate::prompt::{render_inst_ic, AugmentedQuery, PromptError, PromptFormat};
use crate::trainer::{select_examples, PoolIndex, Selection, TrainError};

const MAGIC: &str = "RFI1";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RetrieveError {
    #[error("cannot index an empty corpus")]
    EmptyCorpus,
    #[error("query dimension {query} does not match index dimension {index}")]
    DimMismatch { query: usize, index: usize },
    #[error("format `{0}` needs an example pool")]
    MissingPool(String),
    #[error("{path}:{line}: malformed run line")]
    MalformedRun { path: String, line: usize },
    #[error(transparent)]
    Embedder(#[from] EmbedderError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Selection(#[from] TrainError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

pub type Result<T> = std::result::Result<T, RetrieveError>;

/// Document embeddings stored row-major, one unit (or zero) row per document.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatIndex {
    ids: Vec<String>,
    matrix: Vec<f64>,
    dim: usize,
}

/// Search output: `(doc id, score)` by score descending, ties by id ascending.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedList {
    pub entries: Vec<(String, f64)>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }
}

fn chunked<T: Send, F>(n: usize, threads: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync,
{
    let threads = threads.max(1).min(n.max(1));
    if threads == 1 {
        return (0..n).map(&f).collect();
    }
    let chunk = n.div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let f = &f;
                s.spawn(move || (t * chunk..((t + 1) * chunk).min(n)).map(f).collect::<Vec<T>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

impl FlatIndex {
    pub fn build(corpus: &[Document], params: &EmbedderParams) -> Result<Self> {
        Self::build_parallel(corpus, params, 1)
    }

    /// Row `i` depends only on document `i`, so the result does not depend
    /// on `threads`.
    pub fn build_parallel(corpus: &[Document], params: &EmbedderParams, threads: usize) -> Result<Self> {
        if corpus.is_empty() {
            return Err(RetrieveError::EmptyCorpus);
        }
        let dim = params.embed_dim();
        let rows = chunked(corpus.len(), threads, |i| params.embed(&corpus[i].full_text()));
        let mut matrix = Vec::with_capacity(corpus.len() * dim);
        for row in rows {
            matrix.extend_from_slice(&row?.0);
        }
        Ok(Self {
            ids: corpus.iter().map(|d| d.id.clone()).collect(),
            matrix,
            dim,
        })
    }

    pub fn from_rows(ids: Vec<String>, rows: Vec<Embedding>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(RetrieveError::EmptyCorpus);
        };
        let dim = first.dim();
        let mut matrix = Vec::with_capacity(rows.len() * dim);
        for row in &rows {
            if row.dim() != dim {
                return Err(RetrieveError::DimMismatch { query: row.dim(), index: dim });
            }
            matrix.extend_from_slice(&row.0);
        }
        assert_eq!(ids.len(), rows.len(), "one id per row");
        Ok(Self { ids, matrix, dim })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// Exact top-`k` by dot product.
    pub fn search(&self, query: &Embedding, k: usize) -> Result<RankedList> {
        if query.dim() != self.dim {
            return Err(RetrieveError::DimMismatch {
                query: query.dim(),
                index: self.dim,
            });
        }
        if k == 0 {
            return Ok(RankedList::default());
        }
        if query.is_zero() {
            log::warn!("zero query embedding; results are ordered by document id");
        }
        let mut scored: Vec<(usize, f64)> = (0..self.len())
            .map(|i| (i, dot(self.row(i), &query.0)))
            .collect();
        let by_rank = |a: &(usize, f64), b: &(usize, f64)| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| self.ids[a.0].cmp(&self.ids[b.0]))
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, by_rank);
            scored.truncate(k);
        }
        scored.sort_by(by_rank);
        Ok(RankedList {
            entries: scored.into_iter().map(|(i, s)| (self.ids[i].clone(), s)).collect(),
        })
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<W> {
        let io = |e: std::io::Error| RetrieveError::Format(FormatError::Io(e));
        let mut w = Writer::new(out);
        w.bytes(MAGIC.as_bytes()).map_err(io)?;
        w.u32(VERSION).map_err(io)?;
        w.u64(self.len() as u64).map_err(io)?;
        w.u64(self.dim as u64).map_err(io)?;
        for id in &self.ids {
            w.str(id).map_err(io)?;
        }
        for &x in &self.matrix {
            w.f64(x).map_err(io)?;
        }
        w.finish().map_err(io)
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut r = Reader::new(input);
        r.magic(MAGIC)?;
        r.version(VERSION)?;
        let n = r.len(1 << 32)?;
        let dim = r.len(1 << 16)?;
        if n == 0 || dim == 0 {
            return Err(FormatError::Corrupt("empty index".into()).into());
        }
        let ids = (0..n).map(|_| r.str()).collect::<std::result::Result<Vec<_>, _>>()?;
        let mut matrix = Vec::with_capacity((n * dim).min(1 << 26));
        for _ in 0..n * dim {
            matrix.push(r.f64()?);
        }
        r.expect_eof()?;
        Ok(Self { ids, matrix, dim })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(FormatError::Io)?;
        self.write_to(BufWriter::new(file))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(FormatError::Io)?;
        Self::read_from(BufReader::new(file))
    }
}

pub fn build_flat_index(corpus: &[Document], params: &EmbedderParams) -> Result<FlatIndex> {
    FlatIndex::build(corpus, params)
}

pub fn search(index: &FlatIndex, query: &Embedding, k: usize) -> Result<RankedList> {
    index.search(query, k)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceConfig {
    pub format: PromptFormat,
    /// In-context examples per query.
    pub k: usize,
    /// Documents returned per query.
    pub top_k: usize,
    pub selection: Selection,
    /// Seeds random example selection.
    pub seed: u64,
    pub threads: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            format: PromptFormat::default(),
            k: 5,
            top_k: 10,
            selection: Selection::Retrieved,
            seed: 0,
            threads: 1,
        }
    }
}

/// Per-query example selection and rendering. Random selection draws from an
/// rng seeded by `(seed, query position)` so results do not depend on
/// threading.
pub fn render_query(
    query: &Query,
    position: usize,
    instruction: &str,
    pool: Option<&PoolIndex>,
    config: &InferenceConfig,
) -> Result<AugmentedQuery> {
    let examples = if config.format.kind.uses_examples() && config.k > 0 {
        let pool = pool.ok_or_else(|| RetrieveError::MissingPool(config.format.kind.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(position as u64);
        select_examples(&pool.pool, &pool.index, &query.text, config.k, config.selection, None, &mut rng)?
    } else {
        Vec::new()
    };
    Ok(render_inst_ic(instruction, &examples, &query.text, config.format)?)
}

pub fn run_inference(
    queries: &[Query],
    instruction: &str,
    pool: Option<&PoolIndex>,
    index: &FlatIndex,
    params: &EmbedderParams,
    config: &InferenceConfig,
) -> Result<BTreeMap<String, RankedList>> {
    let results = chunked(queries.len(), config.threads, |i| -> Result<RankedList> {
        let rendered = render_query(&queries[i], i, instruction, pool, config)?;
        let emb = params.embed(&rendered.text)?;
        index.search(&emb, config.top_k)
    });
    queries
        .iter()
        .zip(results)
        .map(|(q, r)| Ok((q.id.clone(), r?)))
        .collect()
}

/// Writes `qid Q0 docid rank score tag` lines, ranks from 1.
pub fn write_run(path: &Path, run: &BTreeMap<String, RankedList>, tag: &str) -> Result<()> {
    let io = |e: std::io::Error| RetrieveError::Format(FormatError::Io(e));
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for (qid, list) in run {
        for (rank, (did, score)) in list.entries.iter().enumerate() {
            writeln!(w, "{qid} Q0 {did} {} {score} {tag}", rank + 1).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_run(path: &Path) -> Result<BTreeMap<String, RankedList>> {
    let io = |e: std::io::Error| RetrieveError::Format(FormatError::Io(e));
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut rows: BTreeMap<String, Vec<(usize, String, f64)>> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || RetrieveError::MalformedRun {
            path: path.display().to_string(),
            line: i + 1,
        };
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(bad());
        }
        let rank: usize = cols[3].parse().map_err(|_| bad())?;
        let score: f64 = cols[4].parse().map_err(|_| bad())?;
        rows.entry(cols[0].to_string())
            .or_default()
            .push((rank, cols[2].to_string(), score));
    }
    Ok(rows
        .into_iter()
        .map(|(qid, mut entries)| {
            entries.sort_by_key(|e| e.0);
            let entries = entries.into_iter().map(|(_, d, s)| (d, s)).collect();
            (qid, RankedList { entries })
        })
        .collect())
}
