//! Stage-level latency of the inference pipeline.
//!
//! Stage boundaries, per query:
//!
//! * **NN**: BM25 neighbor lookup plus joining the neighbors' documents
//! * **Query**: prompt rendering, featurization, projection, normalization
//! * **Search**: dot products against the index and top-K selection
//!
//! Each stage is the difference of consecutive timestamps, so a query's
//! end-to-end span equals the sum of its stages exactly. Stage times are
//! summed over all queries; the reported repetition is the one with the
//! median total.

use std::fmt;
use std::io;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Query;
use crate::embedder::{EmbedderError, EmbedderParams};
use crate::prompt::{render_inst, render_inst_ic, PromptError, PromptFormat};
use crate::retrieve::{FlatIndex, RetrieveError};
use crate::trainer::{select_examples, PoolIndex, Selection, TrainError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("repetitions must be ≥ 1")]
    NoRepetitions,
    #[error("the in-context setting needs an example pool")]
    MissingPool,
    #[error("malformed latency csv: {0}")]
    Malformed(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Embedder(#[from] EmbedderError),
    #[error(transparent)]
    Retrieve(#[from] RetrieveError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Setting {
    Inst,
    InstIC,
}

impl Setting {
    pub fn as_str(self) -> &'static str {
        match self {
            Setting::Inst => "inst",
            Setting::InstIC => "inst+ic",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setting {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "inst" => Ok(Setting::Inst),
            "inst+ic" => Ok(Setting::InstIC),
            other => Err(format!("unknown setting `{other}` (inst|inst+ic)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub dataset: String,
    pub setting: Setting,
    pub n_corpus: usize,
    pub avg_q_len: f64,
    pub nn_s: f64,
    pub query_s: f64,
    pub search_s: f64,
    pub total_s: f64,
    pub inc_factor: Option<f64>,
    /// Set when stages ran on several threads; stage times are then summed
    /// across threads and overlap in wall time.
    pub parallel: bool,
}

pub struct BenchInputs<'a> {
    pub dataset: &'a str,
    pub queries: &'a [Query],
    pub instruction: &'a str,
    pub pool: Option<&'a PoolIndex>,
    pub index: &'a FlatIndex,
    pub params: &'a EmbedderParams,
    /// Format used for the in-context setting.
    pub format: PromptFormat,
    pub k: usize,
    pub top_k: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord)]
struct StageTimes {
    nn: Duration,
    query: Duration,
    search: Duration,
}

impl StageTimes {
    fn total(&self) -> Duration {
        self.nn + self.query + self.search
    }

    fn add(&mut self, other: StageTimes) {
        self.nn += other.nn;
        self.query += other.query;
        self.search += other.search;
    }
}

/// Smallest nonzero step observed between consecutive monotonic clock reads.
pub fn timer_resolution() -> Duration {
    let mut best = Duration::MAX;
    for _ in 0..1000 {
        let a = Instant::now();
        let mut b = Instant::now();
        while b == a {
            b = Instant::now();
        }
        best = best.min(b - a);
    }
    best.max(Duration::from_nanos(1))
}

/// Returns stage times and the rendered query length.
fn time_query(inputs: &BenchInputs<'_>, setting: Setting, query: &Query) -> Result<(StageTimes, usize)> {
    // Retrieved selection never draws from the rng.
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    let t0 = Instant::now();
    let (examples, t1) = match setting {
        Setting::Inst => (Vec::new(), t0),
        Setting::InstIC => {
            let pool = inputs.pool.ok_or(BenchError::MissingPool)?;
            let ex = select_examples(
                &pool.pool,
                &pool.index,
                &query.text,
                inputs.k,
                Selection::Retrieved,
                None,
                &mut unused,
            )?;
            (ex, Instant::now())
        }
    };
    let rendered = match setting {
        Setting::Inst => render_inst(inputs.instruction, &query.text)?,
        Setting::InstIC => render_inst_ic(inputs.instruction, &examples, &query.text, inputs.format)?,
    };
    let emb = inputs.params.embed(&rendered.text)?;
    let t2 = Instant::now();
    let ranked = inputs.index.search(&emb, inputs.top_k)?;
    let t3 = Instant::now();
    std::hint::black_box(ranked);
    Ok((
        StageTimes {
            nn: t1 - t0,
            query: t2 - t1,
            search: t3 - t2,
        },
        rendered.approx_len,
    ))
}

fn one_pass(inputs: &BenchInputs<'_>, setting: Setting, threads: usize) -> Result<(StageTimes, usize)> {
    let threads = threads.max(1).min(inputs.queries.len().max(1));
    if threads == 1 {
        let mut times = StageTimes::default();
        let mut len = 0;
        for q in inputs.queries {
            let (t, l) = time_query(inputs, setting, q)?;
            times.add(t);
            len += l;
        }
        return Ok((times, len));
    }
    let chunk = inputs.queries.len().div_ceil(threads);
    let parts: Vec<Result<(StageTimes, usize)>> = std::thread::scope(|s| {
        let handles: Vec<_> = inputs
            .queries
            .chunks(chunk)
            .map(|qs| {
                s.spawn(move || {
                    let mut times = StageTimes::default();
                    let mut len = 0;
                    for q in qs {
                        let (t, l) = time_query(inputs, setting, q)?;
                        times.add(t);
                        len += l;
                    }
                    Ok((times, len))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("bench worker panicked")).collect()
    });
    let mut times = StageTimes::default();
    let mut len = 0;
    for p in parts {
        let (t, l) = p?;
        times.add(t);
        len += l;
    }
    Ok((times, len))
}

/// Profiles `setting` with one untimed warmup pass and `repetitions` timed
/// passes.
pub fn profile(inputs: &BenchInputs<'_>, setting: Setting, repetitions: usize) -> Result<LatencyReport> {
    profile_with(inputs, setting, repetitions, 1, 1)
}

pub fn profile_with(
    inputs: &BenchInputs<'_>,
    setting: Setting,
    repetitions: usize,
    warmup: usize,
    threads: usize,
) -> Result<LatencyReport> {
    if repetitions == 0 {
        return Err(BenchError::NoRepetitions);
    }
    for _ in 0..warmup {
        one_pass(inputs, setting, threads)?;
    }
    let mut runs = Vec::with_capacity(repetitions);
    let mut total_len = 0;
    for _ in 0..repetitions {
        let (times, len) = one_pass(inputs, setting, threads)?;
        total_len = len;
        runs.push(times);
    }
    runs.sort_by_key(StageTimes::total);
    let median = runs[(runs.len() - 1) / 2];
    let secs = |d: Duration| d.as_nanos() as f64 * 1e-9;
    let n = inputs.queries.len();
    Ok(LatencyReport {
        dataset: inputs.dataset.to_string(),
        setting,
        n_corpus: inputs.index.len(),
        avg_q_len: if n == 0 { 0.0 } else { total_len as f64 / n as f64 },
        nn_s: secs(median.nn),
        query_s: secs(median.query),
        search_s: secs(median.search),
        total_s: secs(median.total()),
        inc_factor: None,
        parallel: threads > 1,
    })
}

pub fn inc_factor(ic_total: f64, inst_total: f64) -> f64 {
    ic_total / inst_total
}

/// Fills `inc_factor` on every in-context row from the plain row of the same
/// dataset.
pub fn attach_inc_factors(reports: &mut [LatencyReport]) {
    let bases: Vec<(String, f64)> = reports
        .iter()
        .filter(|r| r.setting == Setting::Inst)
        .map(|r| (r.dataset.clone(), r.total_s))
        .collect();
    for r in reports.iter_mut() {
        r.inc_factor = match r.setting {
            Setting::Inst => None,
            Setting::InstIC => bases
                .iter()
                .find(|(d, _)| *d == r.dataset)
                .map(|&(_, base)| inc_factor(r.total_s, base)),
        };
    }
}

const HEADER: [&str; 9] = ["Dataset", "#Corpus", "Setting", "AvgQLen", "NN", "Query", "Search", "Total", "Inc"];

pub fn emit_csv<W: io::Write>(reports: &[LatencyReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in reports {
        w.write_record([
            r.dataset.clone(),
            r.n_corpus.to_string(),
            r.setting.to_string(),
            r.avg_q_len.to_string(),
            r.nn_s.to_string(),
            r.query_s.to_string(),
            r.search_s.to_string(),
            r.total_s.to_string(),
            r.inc_factor.map(|x| x.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_csv<R: io::Read>(input: R) -> Result<Vec<LatencyReport>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(HEADER) {
        return Err(BenchError::Malformed(format!("unexpected header {header:?}")));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| BenchError::Malformed(format!("{s}: {e}")));
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let inc = &rec[8];
        out.push(LatencyReport {
            dataset: rec[0].to_string(),
            n_corpus: rec[1].parse().map_err(|e| BenchError::Malformed(format!("#Corpus: {e}")))?,
            setting: rec[2].parse().map_err(BenchError::Malformed)?,
            avg_q_len: num(&rec[3])?,
            nn_s: num(&rec[4])?,
            query_s: num(&rec[5])?,
            search_s: num(&rec[6])?,
            total_s: num(&rec[7])?,
            inc_factor: if inc.is_empty() { None } else { Some(num(inc)?) },
            parallel: false,
        });
    }
    Ok(out)
}
