//! Deterministic synthetic benchmark where in-context examples carry the
//! signal needed to disambiguate a query.
//!
//! Every cluster owns a private vocabulary (`c{cluster}w{j}`) and all
//! clusters draw from one shared vocabulary (`s{j}`). Documents mix private
//! and shared tokens 80:20. Queries draw each token from the shared
//! vocabulary with probability `query_ambiguity`, otherwise from the
//! cluster's private vocabulary.
//!
//! Shared tokens in a query come from one of its cluster's *intents*, a small
//! random subset of the shared vocabulary. Test queries and pool queries use
//! the same intents, so a lexical neighbor of a test query usually belongs
//! to the right cluster and its document brings private vocabulary along.
//! Training triples use a separate set of intents and separate documents, so
//! the phrasing of test queries cannot be memorized during training.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    write_corpus, write_pool, write_qrels, write_queries, write_train, DataError, Document, ExamplePool,
    ICExample, PoolSource, QRels, Query, TrainExample,
};

pub const TASK_ID: &str = "synth";
pub const INSTRUCTION: &str = "Given a query, retrieve documents about the same topic";

/// Fraction of document tokens drawn from the cluster's private vocabulary.
const DOC_PRIVATE_FRACTION: f64 = 0.8;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    SpecInvalid(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_clusters: usize,
    pub vocab_per_cluster: usize,
    pub shared_vocab: usize,
    pub docs_per_cluster: usize,
    pub queries_per_cluster: usize,
    /// Probability that a query token comes from the shared vocabulary.
    pub query_ambiguity: f64,
    pub seed: u64,
    pub doc_len: usize,
    pub query_len: usize,
    pub intents_per_cluster: usize,
    pub intent_size: usize,
    pub pool_per_cluster: usize,
    pub train_per_cluster: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_clusters: 8,
            vocab_per_cluster: 40,
            shared_vocab: 200,
            docs_per_cluster: 40,
            queries_per_cluster: 20,
            query_ambiguity: 0.8,
            seed: 7,
            doc_len: 20,
            query_len: 6,
            intents_per_cluster: 4,
            intent_size: 5,
            pool_per_cluster: 60,
            train_per_cluster: 60,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_clusters", self.n_clusters),
            ("vocab_per_cluster", self.vocab_per_cluster),
            ("shared_vocab", self.shared_vocab),
            ("docs_per_cluster", self.docs_per_cluster),
            ("queries_per_cluster", self.queries_per_cluster),
            ("doc_len", self.doc_len),
            ("query_len", self.query_len),
            ("intents_per_cluster", self.intents_per_cluster),
            ("intent_size", self.intent_size),
            ("pool_per_cluster", self.pool_per_cluster),
            ("train_per_cluster", self.train_per_cluster),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(SynthError::SpecInvalid(format!("{name} must be ≥ 1")));
            }
        }
        if !(0.0..=1.0).contains(&self.query_ambiguity) {
            return Err(SynthError::SpecInvalid(format!(
                "query_ambiguity must be in [0, 1], got {}",
                self.query_ambiguity
            )));
        }
        if self.intent_size > self.shared_vocab {
            return Err(SynthError::SpecInvalid(format!(
                "intent_size {} exceeds shared_vocab {}",
                self.intent_size, self.shared_vocab
            )));
        }
        Ok(())
    }
}

pub fn private_token(cluster: usize, j: usize) -> String {
    format!("c{cluster}w{j}")
}

pub fn shared_token(j: usize) -> String {
    format!("s{j}")
}

/// Cluster owning `token` when it is a private-vocabulary token.
pub fn private_cluster(token: &str) -> Option<usize> {
    let rest = token.strip_prefix('c')?;
    let (c, j) = rest.split_once('w')?;
    j.parse::<usize>().ok()?;
    c.parse().ok()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub spec: SynthSpec,
    pub corpus: Vec<Document>,
    pub queries: Vec<Query>,
    pub qrels: QRels,
    pub train: Vec<TrainExample>,
    /// Evaluation-time example pool.
    pub pool: ExamplePool,
    pub instruction: String,
    /// Cluster of each query, by query id.
    pub query_cluster: Vec<(String, usize)>,
}

struct Generator<'a> {
    spec: &'a SynthSpec,
    rng: ChaCha8Rng,
}

impl Generator<'_> {
    fn private(&mut self, cluster: usize) -> String {
        private_token(cluster, self.rng.random_range(0..self.spec.vocab_per_cluster))
    }

    fn document_text(&mut self, cluster: usize) -> String {
        let tokens: Vec<String> = (0..self.spec.doc_len)
            .map(|_| {
                if self.rng.random_bool(DOC_PRIVATE_FRACTION) {
                    self.private(cluster)
                } else {
                    shared_token(self.rng.random_range(0..self.spec.shared_vocab))
                }
            })
            .collect();
        tokens.join(" ")
    }

    fn intent(&mut self) -> Vec<usize> {
        let mut ids = sample(&mut self.rng, self.spec.shared_vocab, self.spec.intent_size).into_vec();
        ids.sort_unstable();
        ids
    }

    fn query_text(&mut self, cluster: usize, intent: &[usize]) -> String {
        let tokens: Vec<String> = (0..self.spec.query_len)
            .map(|_| {
                if self.rng.random_bool(self.spec.query_ambiguity) {
                    shared_token(intent[self.rng.random_range(0..intent.len())])
                } else {
                    self.private(cluster)
                }
            })
            .collect();
        tokens.join(" ")
    }

    fn other_cluster(&mut self, cluster: usize) -> usize {
        let n = self.spec.n_clusters;
        if n == 1 {
            return cluster;
        }
        (cluster + 1 + self.rng.random_range(0..n - 1)) % n
    }
}

/// Generates the benchmark; identical specs give identical data.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut g = Generator {
        spec,
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
    };
    let n = spec.n_clusters;

    let mut corpus = Vec::with_capacity(n * spec.docs_per_cluster);
    for c in 0..n {
        for i in 0..spec.docs_per_cluster {
            let text = g.document_text(c);
            corpus.push(Document::new(format!("d{c}_{i}"), "", text));
        }
    }

    let eval_intents: Vec<Vec<Vec<usize>>> = (0..n)
        .map(|_| (0..spec.intents_per_cluster).map(|_| g.intent()).collect())
        .collect();
    let train_intents: Vec<Vec<Vec<usize>>> = (0..n)
        .map(|_| (0..spec.intents_per_cluster).map(|_| g.intent()).collect())
        .collect();

    let mut queries = Vec::new();
    let mut qrels = QRels::default();
    let mut query_cluster = Vec::new();
    for (c, intents) in eval_intents.iter().enumerate() {
        for i in 0..spec.queries_per_cluster {
            let intent = &intents[i % spec.intents_per_cluster];
            let id = format!("q{c}_{i}");
            queries.push(Query::new(id.clone(), g.query_text(c, intent)));
            for j in 0..spec.docs_per_cluster {
                qrels.insert(&id, &format!("d{c}_{j}"), 1);
            }
            query_cluster.push((id, c));
        }
    }

    let mut examples = Vec::new();
    for (c, intents) in eval_intents.iter().enumerate() {
        for i in 0..spec.pool_per_cluster {
            let intent = &intents[i % spec.intents_per_cluster];
            let query = g.query_text(c, intent);
            examples.push(ICExample::new(query, g.document_text(c)));
        }
    }

    let mut train = Vec::new();
    for (c, intents) in train_intents.iter().enumerate() {
        for i in 0..spec.train_per_cluster {
            let intent = &intents[i % spec.intents_per_cluster];
            let query = g.query_text(c, intent);
            let positive = g.document_text(c);
            let other = g.other_cluster(c);
            let negative = g.document_text(other);
            train.push(TrainExample {
                task_id: TASK_ID.to_string(),
                instruction: INSTRUCTION.to_string(),
                query,
                positive,
                negative,
            });
        }
    }

    Ok(SynthData {
        spec: spec.clone(),
        corpus,
        queries,
        qrels,
        train,
        pool: ExamplePool {
            task_id: TASK_ID.to_string(),
            examples,
            source: PoolSource::TrainSplit,
        },
        instruction: INSTRUCTION.to_string(),
        query_cluster,
    })
}

/// Files written by [`write_dir`].
pub const FILES: [&str; 7] = [
    "corpus.jsonl",
    "queries.jsonl",
    "qrels.tsv",
    "train.jsonl",
    "pool.jsonl",
    "spec.json",
    "instruction.txt",
];

pub fn write_dir(data: &SynthData, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| SynthError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    write_corpus(&dir.join("corpus.jsonl"), &data.corpus)?;
    write_queries(&dir.join("queries.jsonl"), &data.queries)?;
    write_qrels(&dir.join("qrels.tsv"), &data.qrels)?;
    write_train(&dir.join("train.jsonl"), &data.train)?;
    write_pool(&dir.join("pool.jsonl"), &data.pool)?;
    let json = serde_json::to_string_pretty(&data.spec).expect("spec serializes");
    write_text(&dir.join("spec.json"), &(json + "\n"))?;
    write_text(&dir.join("instruction.txt"), &format!("{}\n", data.instruction))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| SynthError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Distinct tokens of a text, split on whitespace.
pub fn token_set(text: &str) -> BTreeSet<&str> {
    text.split_whitespace().collect()
}
