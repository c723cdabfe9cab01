//! Okapi BM25 over the queries of an example pool.
//!
//! Term weight for a query term `t` in item `i`:
//!
//! ```text
//! idf(t)  = ln(1 + (N - n_t + 0.5) / (n_t + 0.5))
//! w(t, i) = idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len_i / avg_len))
//! ```
//!
//! The score of an item is the sum of `w` over the query terms, counting a
//! repeated query term once per occurrence.
//!
//! # `RBM1` layout
//!
//! All integers little-endian.
//!
//! ```text
//! "RBM1" | u32 version (=1) | f64 k1 | f64 b
//! u64 n_items | n_items x u32 token count
//! u64 n_terms | per term, sorted by bytes:
//!     u32 byte len | utf-8 bytes | u32 n_postings | n_postings x (u32 ordinal, u32 tf)
//! ```

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::codec::{FormatError, Reader, Writer};

const MAGIC: &str = "RBM1";
const VERSION: u32 = 1;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

#[derive(Debug, Error)]
pub enum Bm25Error {
    #[error("cannot build an index over an empty collection")]
    EmptyCollection,
    #[error("item ordinal {ordinal} out of range for {n_items} items")]
    OrdinalOutOfRange { ordinal: usize, n_items: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Lowercased whitespace tokens with surrounding ASCII punctuation removed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenList(pub Vec<String>);

impl TokenList {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

pub fn tokenize(text: &str) -> TokenList {
    TokenList(
        text.split_whitespace()
            .map(|raw| raw.to_lowercase())
            .filter_map(|tok| {
                let trimmed = tok.trim_matches(|c: char| c.is_ascii_punctuation());
                (!trimmed.is_empty()).then(|| trimmed.to_string())
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bm25Index {
    postings: HashMap<String, Vec<(u32, u32)>>,
    doc_lengths: Vec<u32>,
    avg_len: f64,
    k1: f64,
    b: f64,
}

fn mean_len(lengths: &[u32]) -> f64 {
    let total: u64 = lengths.iter().map(|&l| u64::from(l)).sum();
    total as f64 / lengths.len() as f64
}

impl Bm25Index {
    pub fn build<S: AsRef<str>>(items: &[S], k1: f64, b: f64) -> Result<Self, Bm25Error> {
        if items.is_empty() {
            return Err(Bm25Error::EmptyCollection);
        }
        if !(k1.is_finite() && k1 > 0.0) {
            return Err(Bm25Error::InvalidParams(format!("k1 must be positive, got {k1}")));
        }
        if !(0.0..=1.0).contains(&b) {
            return Err(Bm25Error::InvalidParams(format!("b must be in [0, 1], got {b}")));
        }
        let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
        let mut doc_lengths = Vec::with_capacity(items.len());
        for (ordinal, item) in items.iter().enumerate() {
            let tokens = tokenize(item.as_ref());
            doc_lengths.push(tokens.len() as u32);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for tok in tokens.0 {
                *tf.entry(tok).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((ordinal as u32, count));
            }
        }
        let avg_len = mean_len(&doc_lengths);
        Ok(Self {
            postings,
            doc_lengths,
            avg_len,
            k1,
            b,
        })
    }

    pub fn with_defaults<S: AsRef<str>>(items: &[S]) -> Result<Self, Bm25Error> {
        Self::build(items, DEFAULT_K1, DEFAULT_B)
    }

    pub fn n_items(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Number of items containing `term`.
    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn idf(&self, doc_freq: usize) -> f64 {
        let n = self.n_items() as f64;
        let df = doc_freq as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, len: u32) -> f64 {
        let tf = f64::from(tf);
        let norm = 1.0 - self.b + self.b * f64::from(len) / self.avg_len;
        idf * tf * (self.k1 + 1.0) / (tf + self.k1 * norm)
    }

    pub fn score(&self, query: &TokenList, item: usize) -> Result<f64, Bm25Error> {
        if item >= self.n_items() {
            return Err(Bm25Error::OrdinalOutOfRange {
                ordinal: item,
                n_items: self.n_items(),
            });
        }
        let mut total = 0.0;
        for term in query.iter() {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            if let Ok(pos) = list.binary_search_by_key(&(item as u32), |&(o, _)| o) {
                let idf = self.idf(list.len());
                total += self.term_weight(idf, list[pos].1, self.doc_lengths[item]);
            }
        }
        Ok(total)
    }

    /// Scores of every item for `query`, accumulated term-at-a-time.
    pub fn score_all(&self, query: &TokenList) -> Vec<f64> {
        let mut scores = vec![0.0; self.n_items()];
        for term in query.iter() {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(list.len());
            for &(ordinal, tf) in list {
                let o = ordinal as usize;
                scores[o] += self.term_weight(idf, tf, self.doc_lengths[o]);
            }
        }
        scores
    }

    /// The `k` best-scoring items ordered by score descending then ordinal
    /// ascending, skipping `exclude`.
    pub fn top_k_neighbors(&self, query: &str, k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
        if k == 0 {
            return Vec::new();
        }
        let scores = self.score_all(&tokenize(query));
        let mut ranked: Vec<(usize, f64)> = scores
            .into_iter()
            .enumerate()
            .filter(|&(o, _)| Some(o) != exclude)
            .collect();
        let by_rank = |a: &(usize, f64), b: &(usize, f64)| {
            b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
        };
        if k < ranked.len() {
            ranked.select_nth_unstable_by(k - 1, by_rank);
            ranked.truncate(k);
        }
        ranked.sort_by(by_rank);
        ranked
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<W, Bm25Error> {
        let mut w = Writer::new(out);
        let io = |e: std::io::Error| Bm25Error::Format(FormatError::Io(e));
        w.bytes(MAGIC.as_bytes()).map_err(io)?;
        w.u32(VERSION).map_err(io)?;
        w.f64(self.k1).map_err(io)?;
        w.f64(self.b).map_err(io)?;
        w.u64(self.doc_lengths.len() as u64).map_err(io)?;
        for &len in &self.doc_lengths {
            w.u32(len).map_err(io)?;
        }
        let mut terms: Vec<&String> = self.postings.keys().collect();
        terms.sort();
        w.u64(terms.len() as u64).map_err(io)?;
        for term in terms {
            let list = &self.postings[term];
            w.str(term).map_err(io)?;
            w.u32(list.len() as u32).map_err(io)?;
            for &(o, tf) in list {
                w.u32(o).map_err(io)?;
                w.u32(tf).map_err(io)?;
            }
        }
        w.finish().map_err(io)
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self, Bm25Error> {
        let mut r = Reader::new(input);
        r.magic(MAGIC)?;
        r.version(VERSION)?;
        let k1 = r.f64()?;
        let b = r.f64()?;
        let n_items = r.len(1 << 32)?;
        if n_items == 0 {
            return Err(FormatError::Corrupt("index has no items".into()).into());
        }
        let mut doc_lengths = Vec::with_capacity(n_items.min(1 << 20));
        for _ in 0..n_items {
            doc_lengths.push(r.u32()?);
        }
        let n_terms = r.len(1 << 32)?;
        let mut postings = HashMap::with_capacity(n_terms.min(1 << 20));
        for _ in 0..n_terms {
            let term = r.str()?;
            let n = r.u32()? as usize;
            let mut list = Vec::with_capacity(n.min(n_items));
            for _ in 0..n {
                let o = r.u32()?;
                let tf = r.u32()?;
                if o as usize >= n_items {
                    return Err(FormatError::Corrupt(format!("posting ordinal {o} out of range")).into());
                }
                list.push((o, tf));
            }
            postings.insert(term, list);
        }
        r.expect_eof()?;
        let avg_len = mean_len(&doc_lengths);
        Ok(Self {
            postings,
            doc_lengths,
            avg_len,
            k1,
            b,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), Bm25Error> {
        let file = File::create(path).map_err(FormatError::Io)?;
        self.write_to(BufWriter::new(file))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, Bm25Error> {
        let file = File::open(path).map_err(FormatError::Io)?;
        Self::read_from(BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &[&str]) -> TokenList {
        TokenList(words.iter().map(|w| w.to_string()).collect())
    }

    #[test]
    fn tokenize_rules() {
        assert_eq!(tokenize("Apple, banana!"), toks(&["apple", "banana"]));
        assert_eq!(tokenize(""), toks(&[]));
        assert_eq!(tokenize("don't stop"), toks(&["don't", "stop"]));
        assert_eq!(tokenize("  ; Query:\tfoo\u{00a0}bar "), toks(&["query", "foo", "bar"]));
        assert_eq!(tokenize("[x]"), toks(&["x"]));
    }

    #[test]
    fn build_stats() {
        let idx = Bm25Index::with_defaults(&["apple banana", "banana cherry"]).unwrap();
        assert_eq!(idx.avg_len(), 2.0);
        assert_eq!(idx.n_items(), 2);
        assert!(matches!(
            Bm25Index::with_defaults::<&str>(&[]),
            Err(Bm25Error::EmptyCollection)
        ));
    }

    #[test]
    fn score_no_match_is_zero() {
        let idx = Bm25Index::with_defaults(&["apple banana", "banana cherry"]).unwrap();
        assert_eq!(idx.score(&toks(&["apple"]), 1).unwrap(), 0.0);
        assert!(matches!(
            idx.score(&toks(&["apple"]), 2),
            Err(Bm25Error::OrdinalOutOfRange { .. })
        ));
    }

    #[test]
    fn repeated_query_term_doubles() {
        let idx = Bm25Index::with_defaults(&["x y", "y z z"]).unwrap();
        let once = idx.score(&toks(&["x"]), 0).unwrap();
        let twice = idx.score(&toks(&["x", "x"]), 0).unwrap();
        assert!(once > 0.0);
        assert_eq!(twice, 2.0 * once);
    }

    #[test]
    fn single_term_matches_direct_formula() {
        let idx = Bm25Index::with_defaults(&["apple banana", "banana cherry"]).unwrap();
        let s = idx.score(&toks(&["apple"]), 0).unwrap();
        // N=2, n_t=1, tf=1, len=avg
        let idf = (1.0f64 + (2.0 - 1.0 + 0.5) / (1.0 + 0.5)).ln();
        let expected = idf * 1.0 * 2.2 / (1.0 + 1.2 * 1.0);
        assert!((s - expected).abs() < 1e-15);
        assert!((s - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn top_k_edge_cases() {
        let idx = Bm25Index::with_defaults(&["what is bm25", "what is okapi"]).unwrap();
        assert!(idx.top_k_neighbors("what is bm25", 0, None).is_empty());
        let got = idx.top_k_neighbors("what is bm25", 1, Some(0));
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].0, 1);
        // more than available
        assert_eq!(idx.top_k_neighbors("zzz", 5, None).len(), 2);
    }

    #[test]
    fn zero_scores_fill_in_ordinal_order() {
        let idx = Bm25Index::with_defaults(&["a", "b", "c", "d"]).unwrap();
        let got: Vec<usize> = idx.top_k_neighbors("c", 3, None).into_iter().map(|(o, _)| o).collect();
        assert_eq!(got, vec![2, 0, 1]);
    }

    #[test]
    fn rarer_terms_score_higher() {
        let idx = Bm25Index::with_defaults(&["common rare", "common x", "common y", "z w"]).unwrap();
        let common = idx.score(&toks(&["common"]), 0).unwrap();
        let rare = idx.score(&toks(&["rare"]), 0).unwrap();
        assert!(rare > common);
    }

    #[test]
    fn binary_round_trip_and_errors() {
        let idx = Bm25Index::with_defaults(&["apple banana", "banana cherry", "don't stop"]).unwrap();
        let bytes = idx.write_to(Vec::new()).unwrap();
        assert_eq!(&bytes[..4], b"RBM1");
        let back = Bm25Index::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, idx);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            Bm25Index::read_from(bad.as_slice()),
            Err(Bm25Error::Format(FormatError::BadMagic { .. }))
        ));
        for cut in [3, 10, bytes.len() - 1] {
            assert!(matches!(
                Bm25Index::read_from(&bytes[..cut]),
                Err(Bm25Error::Format(FormatError::Truncated))
            ));
        }
    }
}
