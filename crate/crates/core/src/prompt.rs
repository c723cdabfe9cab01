//! Query rendering: instruction-only queries and queries augmented with
//! in-context examples.
//!
//! Every rendered query is a list of labeled segments joined by ` ; `, with
//! the target query last:
//!
//! ```text
//! Instruct: {t} ; Query: {q_1} ; Document: {d_1} ; ... ; Query: {q}
//! ```
//!
//! An empty instruction drops the `Instruct:` segment entirely.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::ICExample;

pub const SEPARATOR: &str = " ; ";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("query text is empty")]
    EmptyQuery,
    #[error("in-context example {index} has no negative document")]
    MissingNegative { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FormatKind {
    Inst,
    InstIC,
    QueriesOnly,
    DocOnly,
    ShuffleNC,
    ShuffleC,
    InstICNeg,
}

impl FormatKind {
    pub const ALL: [FormatKind; 7] = [
        FormatKind::Inst,
        FormatKind::InstIC,
        FormatKind::QueriesOnly,
        FormatKind::DocOnly,
        FormatKind::ShuffleNC,
        FormatKind::ShuffleC,
        FormatKind::InstICNeg,
    ];

    pub fn uses_examples(self) -> bool {
        self != FormatKind::Inst
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FormatKind::Inst => "inst",
            FormatKind::InstIC => "inst+ic",
            FormatKind::QueriesOnly => "queries-only",
            FormatKind::DocOnly => "doc-only",
            FormatKind::ShuffleNC => "shuffle-nc",
            FormatKind::ShuffleC => "shuffle-c",
            FormatKind::InstICNeg => "inst+ic+neg",
        }
    }
}

impl fmt::Display for FormatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FormatKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FormatKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = FormatKind::ALL.iter().map(|k| k.as_str()).collect();
                format!("unknown format `{s}` (expected one of {})", names.join("|"))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptFormat {
    pub kind: FormatKind,
    /// Wrap every query payload, the target included, as `[q]`.
    pub bracket_queries: bool,
    pub shuffle_seed: u64,
}

impl PromptFormat {
    pub fn new(kind: FormatKind) -> Self {
        Self {
            kind,
            bracket_queries: false,
            shuffle_seed: 0,
        }
    }

    pub fn bracketed(mut self) -> Self {
        self.bracket_queries = true;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.shuffle_seed = seed;
        self
    }
}

impl Default for PromptFormat {
    fn default() -> Self {
        Self::new(FormatKind::InstIC)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedQuery {
    pub text: String,
    pub n_examples: usize,
    pub format: PromptFormat,
    /// Whitespace-separated token count of `text`.
    pub approx_len: usize,
}

impl AugmentedQuery {
    fn new(text: String, n_examples: usize, format: PromptFormat) -> Self {
        let approx_len = text.split_whitespace().count();
        Self {
            text,
            n_examples,
            format,
            approx_len,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Label {
    Instruct,
    Query,
    Document,
    PositiveDocument,
    NegativeDocument,
}

impl Label {
    fn prefix(self) -> &'static str {
        match self {
            Label::Instruct => "Instruct: ",
            Label::Query => "Query: ",
            Label::Document => "Document: ",
            Label::PositiveDocument => "Positive Document: ",
            Label::NegativeDocument => "Negative Document: ",
        }
    }
}

struct Segments<'a> {
    bracket: bool,
    parts: Vec<(Label, &'a str)>,
}

impl<'a> Segments<'a> {
    fn push(&mut self, label: Label, payload: &'a str) {
        self.parts.push((label, payload));
    }

    fn render(&self) -> String {
        let mut out = String::new();
        for (i, (label, payload)) in self.parts.iter().enumerate() {
            if i > 0 {
                out.push_str(SEPARATOR);
            }
            out.push_str(label.prefix());
            if self.bracket && *label == Label::Query {
                out.push('[');
                out.push_str(payload);
                out.push(']');
            } else {
                out.push_str(payload);
            }
        }
        out
    }
}

/// Seed for the shuffle variants: the configured seed mixed with the target
/// query so different queries get different permutations.
pub fn shuffle_rng(seed: u64, query: &str) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in query.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h)
}

pub fn render_inst(instruction: &str, query: &str) -> Result<AugmentedQuery, PromptError> {
    render_inst_ic(instruction, &[], query, PromptFormat::new(FormatKind::Inst))
}

pub fn render_inst_ic(
    instruction: &str,
    examples: &[ICExample],
    query: &str,
    format: PromptFormat,
) -> Result<AugmentedQuery, PromptError> {
    if query.trim().is_empty() {
        return Err(PromptError::EmptyQuery);
    }
    let examples: &[ICExample] = if format.kind.uses_examples() { examples } else { &[] };

    let mut seg = Segments {
        bracket: format.bracket_queries,
        parts: Vec::with_capacity(3 + 3 * examples.len()),
    };
    if !instruction.is_empty() {
        seg.push(Label::Instruct, instruction);
    }
    match format.kind {
        FormatKind::Inst => {}
        FormatKind::InstIC => {
            for ex in examples {
                seg.push(Label::Query, &ex.query);
                seg.push(Label::Document, &ex.positive);
            }
        }
        FormatKind::QueriesOnly => {
            for ex in examples {
                seg.push(Label::Query, &ex.query);
            }
        }
        FormatKind::DocOnly => {
            for ex in examples {
                seg.push(Label::Document, &ex.positive);
            }
        }
        FormatKind::ShuffleC => {
            let mut docs: Vec<&str> = examples.iter().map(|ex| ex.positive.as_str()).collect();
            docs.shuffle(&mut shuffle_rng(format.shuffle_seed, query));
            for (ex, doc) in examples.iter().zip(docs) {
                seg.push(Label::Query, &ex.query);
                seg.push(Label::Document, doc);
            }
        }
        FormatKind::ShuffleNC => {
            let mut free: Vec<(Label, &str)> = examples
                .iter()
                .flat_map(|ex| [(Label::Query, ex.query.as_str()), (Label::Document, ex.positive.as_str())])
                .collect();
            free.shuffle(&mut shuffle_rng(format.shuffle_seed, query));
            seg.parts.extend(free);
        }
        FormatKind::InstICNeg => {
            for (index, ex) in examples.iter().enumerate() {
                let neg = ex
                    .negative
                    .as_deref()
                    .ok_or(PromptError::MissingNegative { index })?;
                seg.push(Label::Query, &ex.query);
                seg.push(Label::PositiveDocument, &ex.positive);
                seg.push(Label::NegativeDocument, neg);
            }
        }
    }
    seg.push(Label::Query, query);
    Ok(AugmentedQuery::new(seg.render(), examples.len(), format))
}
