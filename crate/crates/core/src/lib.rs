//! Retrieval with in-context examples at desk scale.
//!
//! The pipeline selects lexical neighbors of a query from an example pool
//! ([`bm25`]), renders them into an augmented query ([`prompt`]), encodes it
//! with a hashed n-gram projection ([`embedder`]) trained contrastively
//! ([`trainer`]), searches an exact dense index ([`retrieve`]) and scores
//! the ranking with nDCG ([`eval`]). [`bench`] times each stage and
//! [`synth`] builds a benchmark where examples carry the signal.

pub mod bench;
pub mod bm25;
pub mod cli;
pub mod codec;
pub mod data;
pub mod embedder;
pub mod eval;
pub mod prompt;
pub mod retrieve;
pub mod synth;
pub mod trainer;

pub use bm25::{tokenize, Bm25Index};
pub use data::{Document, ExamplePool, ICExample, QRels, Query, TrainExample};
pub use embedder::{EmbedderConfig, EmbedderParams, Embedding};
pub use eval::{evaluate, ndcg_at_k, EvalReport};
pub use prompt::{AugmentedQuery, FormatKind, PromptFormat};
pub use retrieve::{FlatIndex, InferenceConfig, RankedList};
pub use trainer::{train, PoolIndex, Selection, TrainConfig};

/// Any error raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error(transparent)]
    Bm25(#[from] bm25::Bm25Error),
    #[error(transparent)]
    Prompt(#[from] prompt::PromptError),
    #[error(transparent)]
    Embedder(#[from] embedder::EmbedderError),
    #[error(transparent)]
    Train(#[from] trainer::TrainError),
    #[error(transparent)]
    Retrieve(#[from] retrieve::RetrieveError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    Bench(#[from] bench::BenchError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
    #[error(transparent)]
    Format(#[from] codec::FormatError),
}
