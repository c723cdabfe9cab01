//! BeIR-style dataset files: corpus, queries, relevance judgments, training
//! triples and in-context example pools.
//!
//! On-disk layout:
//!
//! * `corpus.jsonl` with one `{"_id", "title", "text"}` object per line
//! * `queries.jsonl` with one `{"_id", "text"}` object per line
//! * `qrels.tsv` with `query-id<TAB>corpus-id<TAB>score` rows and an optional header
//! * `pool.jsonl` with one `{"query", "positive", "negative"?}` object per line
//! * `train.jsonl` with one `{"task_id", "instruction", "query", "positive", "negative"}` object per line

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: malformed line: {reason}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: malformed qrels row: {reason}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: negative relevance grade")]
    NegativeGrade { path: PathBuf, line: usize },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("{0}: example pool is empty")]
    EmptyPool(PathBuf),
    #[error("invalid record: {0}")]
    Invalid(String),
    #[error("unknown dataset `{0}`; register it with a category first")]
    UnknownDataset(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    #[serde(rename = "_id")]
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            text: text.into(),
        }
    }

    /// Text fed to the document encoder: title and body joined by one space.
    pub fn full_text(&self) -> String {
        format!("{} {}", self.title, self.text)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty `_id`".into());
        }
        if self.title.is_empty() && self.text.is_empty() {
            return Err(format!("document `{}` has neither title nor text", self.id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    #[serde(rename = "_id")]
    pub id: String,
    pub text: String,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// Graded relevance judgments, query id → doc id → grade.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QRels {
    pub judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl QRels {
    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: u32) -> Option<u32> {
        self.judgments
            .entry(query_id.to_string())
            .or_default()
            .insert(doc_id.to_string(), grade)
    }

    pub fn get(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query_id)
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }

    /// Checks that every judged query id belongs to `queries`.
    pub fn validate_against(&self, queries: &[Query]) -> Result<()> {
        let known: HashSet<&str> = queries.iter().map(|q| q.id.as_str()).collect();
        for qid in self.judgments.keys() {
            if !known.contains(qid.as_str()) {
                return Err(DataError::Invalid(format!(
                    "qrels reference unknown query `{qid}`"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainExample {
    pub task_id: String,
    #[serde(default)]
    pub instruction: String,
    pub query: String,
    pub positive: String,
    #[serde(default)]
    pub negative: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ICExample {
    pub query: String,
    pub positive: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative: Option<String>,
}

impl ICExample {
    pub fn new(query: impl Into<String>, positive: impl Into<String>) -> Self {
        Self {
            query: query.into(),
            positive: positive.into(),
            negative: None,
        }
    }

    pub fn with_negative(mut self, negative: impl Into<String>) -> Self {
        self.negative = Some(negative.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PoolSource {
    TrainSplit,
    DevSplit,
    GenQ,
}

impl FromStr for PoolSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" | "trainsplit" => Ok(Self::TrainSplit),
            "dev" | "devsplit" => Ok(Self::DevSplit),
            "genq" => Ok(Self::GenQ),
            other => Err(format!("unknown pool source `{other}` (train|dev|genq)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExamplePool {
    pub task_id: String,
    pub examples: Vec<ICExample>,
    pub source: PoolSource,
}

impl ExamplePool {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Builds a pool from the `(query, positive, negative)` triples of one task.
    pub fn from_train(task_id: &str, train: &[TrainExample]) -> Self {
        let examples = train
            .iter()
            .filter(|ex| ex.task_id == task_id)
            .map(|ex| ICExample {
                query: ex.query.clone(),
                positive: ex.positive.clone(),
                negative: (!ex.negative.is_empty()).then(|| ex.negative.clone()),
            })
            .collect();
        Self {
            task_id: task_id.to_string(),
            examples,
            source: PoolSource::TrainSplit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    InDomain,
    OutOfDomain,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::InDomain => "ID",
            Category::OutOfDomain => "OOD",
        })
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "id" | "in-domain" | "indomain" => Ok(Self::InDomain),
            "ood" | "out-of-domain" | "outofdomain" => Ok(Self::OutOfDomain),
            other => Err(format!("unknown category `{other}` (id|ood)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetCategory {
    pub name: String,
    pub category: Category,
}

/// Configured dataset → ID/OOD membership. Names are matched after
/// lowercasing and dropping non-alphanumerics, so `FiQA-2018` and `fiqa2018`
/// are the same dataset.
#[derive(Debug, Clone)]
pub struct CategoryTable {
    entries: HashMap<String, DatasetCategory>,
}

const IN_DOMAIN: &[&str] = &["FEVER", "HotpotQA", "NQ", "Quora", "QuoraRetrieval", "MSMARCO"];
const OUT_OF_DOMAIN: &[&str] = &[
    "ArguAna",
    "ClimateFEVER",
    "CQADupStack",
    "DBPedia",
    "FiQA2018",
    "NFCorpus",
    "SCIDOCS",
    "SciFact",
    "Touche2020",
    "TRECCOVID",
    // reasoning-style sets, none of which appear in the training mixture
    "ARC-C",
    "alpha-NLI",
    "HellaSwag",
    "PIQA",
    "Quail",
    "SiQA",
    "TempReason-L1",
    "WinoGrande",
    "synth",
];

fn normalize_name(name: &str) -> String {
    name.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(|c| c.to_lowercase())
        .collect()
}

impl Default for CategoryTable {
    fn default() -> Self {
        let mut table = Self {
            entries: HashMap::new(),
        };
        for name in IN_DOMAIN {
            table.register(name, Category::InDomain);
        }
        for name in OUT_OF_DOMAIN {
            table.register(name, Category::OutOfDomain);
        }
        table
    }
}

impl CategoryTable {
    pub fn register(&mut self, name: &str, category: Category) {
        self.entries.insert(
            normalize_name(name),
            DatasetCategory {
                name: name.to_string(),
                category,
            },
        );
    }

    pub fn lookup(&self, name: &str) -> Result<&DatasetCategory> {
        self.entries
            .get(&normalize_name(name))
            .ok_or_else(|| DataError::UnknownDataset(name.to_string()))
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

/// Yields `(1-based line number, line)` for every non-blank line.
fn jsonl_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let reader = open(path)?;
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push((i + 1, line));
    }
    Ok(out)
}

fn parse_line<T: for<'de> Deserialize<'de>>(path: &Path, line_no: usize, line: &str) -> Result<T> {
    serde_json::from_str(line).map_err(|e| DataError::MalformedLine {
        path: path.to_path_buf(),
        line: line_no,
        reason: e.to_string(),
    })
}

pub fn load_corpus(path: &Path) -> Result<Vec<Document>> {
    let mut seen = HashSet::new();
    let mut docs = Vec::new();
    for (line_no, line) in jsonl_lines(path)? {
        let doc: Document = parse_line(path, line_no, &line)?;
        doc.validate().map_err(|reason| DataError::MalformedLine {
            path: path.to_path_buf(),
            line: line_no,
            reason,
        })?;
        if !seen.insert(doc.id.clone()) {
            return Err(DataError::DuplicateId(doc.id));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_queries(path: &Path) -> Result<Vec<Query>> {
    let mut seen = HashSet::new();
    let mut queries = Vec::new();
    for (line_no, line) in jsonl_lines(path)? {
        let query: Query = parse_line(path, line_no, &line)?;
        if query.id.is_empty() || query.text.is_empty() {
            return Err(DataError::MalformedLine {
                path: path.to_path_buf(),
                line: line_no,
                reason: "query id and text must be nonempty".into(),
            });
        }
        if !seen.insert(query.id.clone()) {
            return Err(DataError::DuplicateId(query.id));
        }
        queries.push(query);
    }
    Ok(queries)
}

/// Reads a three-column TREC/BeIR qrels file. A first row whose score column
/// is not an integer is treated as a header. Later duplicates of a
/// `(query, doc)` pair overwrite earlier ones.
pub fn load_qrels(path: &Path) -> Result<QRels> {
    let reader = open(path)?;
    let mut qrels = QRels::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let malformed = |reason: String| DataError::MalformedRow {
            path: path.to_path_buf(),
            line: line_no,
            reason,
        };
        if cols.len() != 3 {
            return Err(malformed(format!("expected 3 tab-separated columns, got {}", cols.len())));
        }
        let grade: i64 = match cols[2].trim().parse() {
            Ok(g) => g,
            Err(_) if line_no == 1 => continue,
            Err(_) => return Err(malformed(format!("score `{}` is not an integer", cols[2]))),
        };
        if grade < 0 {
            return Err(DataError::NegativeGrade {
                path: path.to_path_buf(),
                line: line_no,
            });
        }
        let grade = u32::try_from(grade).map_err(|_| malformed("score out of range".into()))?;
        let (qid, did) = (cols[0].trim(), cols[1].trim());
        if qid.is_empty() || did.is_empty() {
            return Err(malformed("empty id".into()));
        }
        if let Some(prev) = qrels.insert(qid, did, grade) {
            log::warn!(
                "{}:{line_no}: duplicate judgment for ({qid}, {did}); {prev} replaced by {grade}",
                path.display()
            );
        }
    }
    Ok(qrels)
}

pub fn load_example_pool(path: &Path, task_id: &str, source: PoolSource) -> Result<ExamplePool> {
    let mut examples = Vec::new();
    for (line_no, line) in jsonl_lines(path)? {
        let ex: ICExample = parse_line(path, line_no, &line)?;
        if ex.query.is_empty() || ex.positive.is_empty() {
            return Err(DataError::MalformedLine {
                path: path.to_path_buf(),
                line: line_no,
                reason: "`query` and `positive` must be nonempty".into(),
            });
        }
        examples.push(ex);
    }
    if examples.is_empty() {
        return Err(DataError::EmptyPool(path.to_path_buf()));
    }
    Ok(ExamplePool {
        task_id: task_id.to_string(),
        examples,
        source,
    })
}

pub fn load_train(path: &Path) -> Result<Vec<TrainExample>> {
    let mut out = Vec::new();
    for (line_no, line) in jsonl_lines(path)? {
        let ex: TrainExample = parse_line(path, line_no, &line)?;
        if ex.query.is_empty() || ex.positive.is_empty() {
            return Err(DataError::MalformedLine {
                path: path.to_path_buf(),
                line: line_no,
                reason: "`query` and `positive` must be nonempty".into(),
            });
        }
        out.push(ex);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| DataError::Invalid(e.to_string()))?;
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_corpus(path: &Path, docs: &[Document]) -> Result<()> {
    write_jsonl(path, docs)
}

pub fn write_queries(path: &Path, queries: &[Query]) -> Result<()> {
    write_jsonl(path, queries)
}

pub fn write_train(path: &Path, train: &[TrainExample]) -> Result<()> {
    write_jsonl(path, train)
}

pub fn write_pool(path: &Path, pool: &ExamplePool) -> Result<()> {
    write_jsonl(path, &pool.examples)
}

pub fn write_qrels(path: &Path, qrels: &QRels) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "query-id\tcorpus-id\tscore").map_err(io_err(path))?;
    for (qid, docs) in &qrels.judgments {
        for (did, grade) in docs {
            writeln!(w, "{qid}\t{did}\t{grade}").map_err(io_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}
