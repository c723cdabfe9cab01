//! Acceptance suite. Prints one line per criterion and exits nonzero if any
//! criterion fails.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rare::bench::{self, BenchInputs, Setting};
use rare::embedder::{EmbedderConfig, EmbedderParams, Embedding};
use rare::eval::{ablate, evaluate_dataset, AblationCell, AblationMode, EvalDataset};
use rare::prompt::{render_inst_ic, FormatKind, PromptFormat};
use rare::retrieve::{FlatIndex, InferenceConfig, RankedList};
use rare::synth::{self, SynthSpec};
use rare::trainer::{batch_grads, contrastive_loss, train, BatchItem, LossConfig, PoolIndex, Selection, TrainConfig};
use rare::{Bm25Index, ExamplePool, ICExample};

use common::{brute_bm25_scores, brute_ndcg, brute_top_k, dense_batch_loss, Triple};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn words(rng: &mut ChaCha8Rng, vocab: usize, max_len: usize) -> String {
    let n = rng.random_range(1..=max_len);
    (0..n)
        .map(|_| {
            let w = format!("w{}", rng.random_range(0..vocab));
            match rng.random_range(0..6) {
                0 => w.to_uppercase(),
                1 => format!("{w},"),
                _ => w,
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn c1_bm25() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..200 {
        let n = rng.random_range(1..=200);
        let vocab = rng.random_range(3..40);
        let items: Vec<String> = (0..n).map(|_| words(&mut rng, vocab, 12)).collect();
        let query = words(&mut rng, vocab, 10);
        let k = rng.random_range(1..=n + 2);
        let exclude = rng.random_bool(0.5).then(|| rng.random_range(0..n));
        let index = Bm25Index::with_defaults(&items).map_err(|e| e.to_string())?;
        let got: Vec<usize> = index.top_k_neighbors(&query, k, exclude).into_iter().map(|(o, _)| o).collect();
        let want: Vec<usize> = brute_top_k(&brute_bm25_scores(&items, &query, 1.2, 0.75), k, exclude)
            .into_iter()
            .map(|(o, _)| o)
            .collect();
        if got != want {
            return Err(format!("instance {case}: got {got:?}, want {want:?}"));
        }
    }
    Ok("200 instances, exact ordinal match".into())
}

fn c2_ndcg() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let n = rng.random_range(1..=20);
        let ids: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
        let mut judged = BTreeMap::new();
        for id in &ids {
            if rng.random_bool(0.6) {
                judged.insert(id.clone(), rng.random_range(0..=3u32));
            }
        }
        let mut order = ids.clone();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let ranked = RankedList {
            entries: order.iter().enumerate().map(|(i, id)| (id.clone(), -(i as f64))).collect(),
        };
        let refs: Vec<&str> = order.iter().map(String::as_str).collect();
        let got = rare::ndcg_at_k(&ranked, &judged, 10);
        worst = worst.max((got - brute_ndcg(&refs, &judged, 10)).abs());
    }
    let hand = RankedList {
        entries: vec![("d2".into(), 1.0), ("d1".into(), 0.5)],
    };
    let judged: BTreeMap<String, u32> = [("d1".to_string(), 1)].into();
    let h = rare::ndcg_at_k(&hand, &judged, 10);
    let herr = (h - 1.0 / 3f64.log2()).abs();
    check(
        worst <= 1e-9 && herr <= 1e-9,
        format!("500 instances, max abs diff {worst:.3e}; hand case {h:.12} (err {herr:.1e})"),
    )
}

fn c3_flat() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..100 {
        let n = rng.random_range(1..=500);
        let d = rng.random_range(1..=16);
        // Coarse values make exact ties common.
        let rows: Vec<Embedding> = (0..n)
            .map(|_| Embedding((0..d).map(|_| rng.random_range(-2..=2) as f64 * 0.5).collect()))
            .collect();
        let ids: Vec<String> = (0..n).map(|i| format!("doc{i}")).collect();
        let q = Embedding((0..d).map(|_| rng.random_range(-2..=2) as f64 * 0.5).collect());
        let k = rng.random_range(1..=n + 3);
        let index = FlatIndex::from_rows(ids.clone(), rows.clone()).map_err(|e| e.to_string())?;
        let got = index.search(&q, k).map_err(|e| e.to_string())?;
        let scores: Vec<f64> = rows.iter().map(|r| rare::embedder::dot(&q.0, &r.0)).collect();
        // Ties break by ascending doc id.
        let mut all: Vec<(String, f64)> = ids.iter().cloned().zip(scores).collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        let want: Vec<(String, f64)> = all.into_iter().take(k).collect();
        if got.entries != want {
            return Err(format!("instance {case} (n={n}, k={k}) differs from full sort"));
        }
    }
    Ok("100 indexes, exact prefix match".into())
}

const FD_H: f64 = 1e-5;
const FD_REL: f64 = 1e-4;

/// Cancellation error of a central difference: each loss value carries a
/// few ulps of `|L|`, divided by `2h`. Entries below `noise / FD_REL` cannot
/// be resolved to `FD_REL`, so the relative error uses it as its floor.
fn fd_noise(loss: f64) -> f64 {
    8.0 * f64::EPSILON * loss.abs().max(1.0) / FD_H
}

fn projections(params: &EmbedderParams, texts: &[&str]) -> HashMap<String, Vec<f64>> {
    let d = params.embed_dim();
    texts
        .iter()
        .map(|t| {
            let mut u = vec![0.0; d];
            for (v, x) in params.featurize(t).entries {
                for (j, uj) in u.iter_mut().enumerate() {
                    *uj += x * params.weights()[v as usize * d + j];
                }
            }
            (t.to_string(), u)
        })
        .collect()
}

fn c4_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    let mut resolved = 0usize;
    for case in 0..50 {
        let b = rng.random_range(1..=8);
        let d = rng.random_range(2..=16);
        let v = rng.random_range(16..=256);
        let tau = [0.01, 0.05, 0.1, 0.5, 1.0][rng.random_range(0..5)];
        let use_neg = rng.random_bool(0.7);
        let config = EmbedderConfig {
            hash_dim: v,
            embed_dim: d,
            ngram_orders: vec![1, 2],
            hash_seed: case,
            max_tokens: None,
        };
        let weights: Vec<f64> = (0..v * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let params = EmbedderParams::from_weights(config, weights).map_err(|e| e.to_string())?;
        let batch: Vec<Triple> = (0..b)
            .map(|_| {
                (
                    words(&mut rng, 30, 6),
                    words(&mut rng, 30, 8),
                    use_neg.then(|| words(&mut rng, 30, 8)),
                )
            })
            .collect();
        let items: Vec<BatchItem> = batch
            .iter()
            .map(|(q, p, n)| BatchItem::new(q.clone(), p.clone(), n.clone()))
            .collect();
        let loss = LossConfig {
            temperature: tau,
            use_hard_negative: use_neg,
            in_batch_hard_negatives: false,
        };
        let out = batch_grads(&items, &params, &loss).map_err(|e| e.to_string())?;
        let texts: Vec<&str> = batch
            .iter()
            .flat_map(|(q, p, n)| [Some(q.as_str()), Some(p.as_str()), n.as_deref()])
            .flatten()
            .collect();
        let base = dense_batch_loss(&projections(&params, &texts), &batch, tau, use_neg);
        if (base - out.value).abs() > 1e-12 * base.abs().max(1.0) {
            return Err(format!("batch {case}: loss {} vs reference {base}", out.value));
        }
        let analytic = out.grads.to_dense(v);
        let floor = fd_noise(base) / FD_REL;
        for (idx, &a) in analytic.iter().enumerate() {
            let mut w = params.weights().to_vec();
            w[idx] += FD_H;
            let plus = EmbedderParams::from_weights(params.config().clone(), w.clone()).unwrap();
            w[idx] -= 2.0 * FD_H;
            let minus = EmbedderParams::from_weights(params.config().clone(), w).unwrap();
            let lp = dense_batch_loss(&projections(&plus, &texts), &batch, tau, use_neg);
            let lm = dense_batch_loss(&projections(&minus, &texts), &batch, tau, use_neg);
            let numeric = (lp - lm) / (2.0 * FD_H);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(rel);
            checked += 1;
            resolved += usize::from(a.abs() > floor);
            if rel >= FD_REL {
                let (bucket, row) = (idx / d, idx % d);
                return Err(format!(
                    "batch {case}: W[{row}][{bucket}] analytic {a:e} numeric {numeric:e} rel {rel:e}"
                ));
            }
        }
    }
    let m = 7;
    let e = Embedding(vec![1.0, 0.0, 0.0]);
    let others: Vec<Embedding> = (0..m - 2).map(|_| e.clone()).collect();
    let uniform = contrastive_loss(&e, &e, Some(&e), &others, 0.01).map_err(|x| x.to_string())?;
    let uerr = (uniform - (m as f64).ln()).abs();
    check(
        uerr <= 1e-9,
        format!(
            "50 batches, {checked} entries ({resolved} above roundoff floor), max rel err {worst:.2e}; \
             uniform ln({m}) err {uerr:.1e}"
        ),
    )
}

fn ex(q: &str, d: &str, n: &str) -> ICExample {
    ICExample::new(q, d).with_negative(n)
}

fn render(kind: FormatKind, examples: &[ICExample]) -> String {
    render_inst_ic("Find docs", examples, "target q", PromptFormat::new(kind).with_seed(3))
        .expect("renders")
        .text
}

fn c5_prompts() -> Outcome {
    let examples = [ex("q one", "doc one", "neg one"), ex("q two", "doc two", "neg two")];
    let golden = [
        (FormatKind::Inst, "Instruct: Find docs ; Query: target q"),
        (
            FormatKind::InstIC,
            "Instruct: Find docs ; Query: q one ; Document: doc one ; Query: q two ; Document: doc two ; Query: target q",
        ),
        (
            FormatKind::QueriesOnly,
            "Instruct: Find docs ; Query: q one ; Query: q two ; Query: target q",
        ),
        (
            FormatKind::DocOnly,
            "Instruct: Find docs ; Document: doc one ; Document: doc two ; Query: target q",
        ),
        (FormatKind::ShuffleNC, SHUFFLE_NC_GOLDEN),
        (FormatKind::ShuffleC, SHUFFLE_C_GOLDEN),
        (
            FormatKind::InstICNeg,
            "Instruct: Find docs ; Query: q one ; Positive Document: doc one ; Negative Document: neg one ; \
             Query: q two ; Positive Document: doc two ; Negative Document: neg two ; Query: target q",
        ),
    ];
    for (kind, want) in golden {
        let got = render(kind, &examples);
        if got != want {
            return Err(format!("{kind}: got `{got}`"));
        }
    }
    for kind in FormatKind::ALL {
        if render(kind, &[]) != golden[0].1 {
            return Err(format!("{kind} with k=0 is not the instruction-only string"));
        }
    }
    // ShuffleC keeps query order and the multiset of documents.
    let many: Vec<ICExample> = (0..6).map(|i| ex(&format!("q{i}"), &format!("d{i}"), "n")).collect();
    let text = render(FormatKind::ShuffleC, &many);
    let segs: Vec<&str> = text.split(" ; ").collect();
    let queries: Vec<&str> = segs.iter().filter_map(|s| s.strip_prefix("Query: ")).collect();
    let mut docs: Vec<&str> = segs.iter().filter_map(|s| s.strip_prefix("Document: ")).collect();
    docs.sort_unstable();
    if queries != ["q0", "q1", "q2", "q3", "q4", "q5", "target q"] || docs != ["d0", "d1", "d2", "d3", "d4", "d5"] {
        return Err(format!("ShuffleC structure broken: `{text}`"));
    }
    let bracketed = render_inst_ic(
        "Retrieve the answer",
        &[ICExample::new("1+1?", "2")],
        "2+2?",
        PromptFormat::new(FormatKind::InstIC).bracketed(),
    )
    .map_err(|e| e.to_string())?
    .text;
    let want = "Instruct: Retrieve the answer ; Query: [1+1?] ; Document: 2 ; Query: [2+2?]";
    check(
        bracketed == want,
        format!("7 formats byte-exact, k=0 degeneracy, ShuffleC multiset, bracketed: `{bracketed}`"),
    )
}

const SHUFFLE_NC_GOLDEN: &str =
    "Instruct: Find docs ; Document: doc two ; Query: q two ; Query: q one ; Document: doc one ; Query: target q";
const SHUFFLE_C_GOLDEN: &str =
    "Instruct: Find docs ; Query: q one ; Document: doc two ; Query: q two ; Document: doc one ; Query: target q";

/// Shared state for the mechanism criteria.
struct Bench {
    data: synth::SynthData,
    dataset: EvalDataset,
    init: EmbedderParams,
    pools: BTreeMap<String, PoolIndex>,
    config: TrainConfig,
    main_model: EmbedderParams,
    main_index: FlatIndex,
    train_time: Duration,
}

fn setup() -> Bench {
    let data = synth::generate(&SynthSpec::default()).expect("synth");
    let dataset = EvalDataset {
        name: "synth".into(),
        instruction: data.instruction.clone(),
        corpus: data.corpus.clone(),
        queries: data.queries.clone(),
        qrels: data.qrels.clone(),
        pool: Some(PoolIndex::new(data.pool.clone()).expect("pool")),
    };
    let init = EmbedderParams::random(EmbedderConfig::default(), 0).expect("init");
    let mut pools = BTreeMap::new();
    pools.insert(
        synth::TASK_ID.to_string(),
        PoolIndex::new(ExamplePool::from_train(synth::TASK_ID, &data.train)).expect("pool"),
    );
    let config = TrainConfig::default();
    let t0 = Instant::now();
    let main_model = train(init.clone(), &data.train, &pools, &config).expect("train").0;
    let train_time = t0.elapsed();
    let main_index = FlatIndex::build(&data.corpus, &main_model).expect("index");
    Bench {
        data,
        dataset,
        init,
        pools,
        config,
        main_model,
        main_index,
        train_time,
    }
}

fn mean_ndcg(b: &Bench, params: &EmbedderParams, index: &FlatIndex, kind: FormatKind, sel: Selection, seed: u64) -> f64 {
    let config = InferenceConfig {
        format: PromptFormat::new(kind),
        selection: sel,
        seed,
        ..InferenceConfig::default()
    };
    evaluate_dataset(&b.dataset, index, params, &config)
        .expect("eval")
        .mean
        .expect("relevant queries")
}

/// Values observed on the reference run; a drift beyond this tolerance means
/// the pipeline changed behavior.
const FROZEN_TOL: f64 = 1e-9;
const FROZEN_UNTRAINED_INST: f64 = 0.1346626858991392;
const FROZEN_UNTRAINED_IC: f64 = 0.6781964207800678;
const FROZEN_INST: f64 = 0.31692448040603866;
const FROZEN_IC: f64 = 1.0;

fn c6_mechanism(b: &Bench) -> Outcome {
    let t0 = Instant::now();
    let init_index = FlatIndex::build(&b.data.corpus, &b.init).map_err(|e| e.to_string())?;
    let u_inst = mean_ndcg(b, &b.init, &init_index, FormatKind::Inst, Selection::Retrieved, 0);
    let u_ic = mean_ndcg(b, &b.init, &init_index, FormatKind::InstIC, Selection::Retrieved, 0);
    let inst = mean_ndcg(b, &b.main_model, &b.main_index, FormatKind::Inst, Selection::Retrieved, 0);
    let ic = mean_ndcg(b, &b.main_model, &b.main_index, FormatKind::InstIC, Selection::Retrieved, 0);
    let elapsed = b.train_time + t0.elapsed();
    let untrained = u_inst.max(u_ic);
    let frozen = [
        (u_inst, FROZEN_UNTRAINED_INST),
        (u_ic, FROZEN_UNTRAINED_IC),
        (inst, FROZEN_INST),
        (ic, FROZEN_IC),
    ]
    .iter()
    .all(|(got, want)| (got - want).abs() <= FROZEN_TOL);
    let detail = format!(
        "InstIC {ic:.4}, Inst {inst:.4}, untrained Inst {u_inst:.4} InstIC {u_ic:.4}, fixtures {}, {:.1}s",
        if frozen { "match" } else { "DRIFT" },
        elapsed.as_secs_f64()
    );
    check(
        ic >= inst + 0.05 && ic >= untrained + 0.10 && frozen && elapsed < Duration::from_secs(120),
        detail,
    )
}

fn c7_selection(b: &Bench) -> Outcome {
    let config = TrainConfig {
        selection: Selection::Random,
        ..b.config.clone()
    };
    let random_model = train(b.init.clone(), &b.data.train, &b.pools, &config).map_err(|e| e.to_string())?.0;
    let random_index = FlatIndex::build(&b.data.corpus, &random_model).map_err(|e| e.to_string())?;
    let seeds = [0u64, 1, 2];
    let avg = |params: &EmbedderParams, index: &FlatIndex, sel: Selection| {
        seeds.iter().map(|&s| mean_ndcg(b, params, index, FormatKind::InstIC, sel, s)).sum::<f64>() / 3.0
    };
    let retrieved = avg(&b.main_model, &b.main_index, Selection::Retrieved);
    let random = avg(&random_model, &random_index, Selection::Random);
    check(
        retrieved >= random + 0.03,
        format!("(Retrieved, Retrieved) {retrieved:.4} vs (Random, Random) {random:.4} over eval seeds 0-2"),
    )
}

fn per_cell(b: &Bench, grid: &[AblationCell]) -> Result<Vec<f64>, String> {
    let mode = AblationMode::TrainPerCell {
        init: &b.init,
        train_set: &b.data.train,
        pools: &b.pools,
        config: b.config.clone(),
    };
    let table = ablate(grid, std::slice::from_ref(&b.dataset), &mode, 10).map_err(|e| e.to_string())?;
    Ok(table.rows.iter().map(|r| r.average().unwrap_or(f64::NAN)).collect())
}

fn c8_formats(b: &Bench) -> Outcome {
    let grid = [
        AblationCell::new(PromptFormat::new(FormatKind::DocOnly), 5, Selection::Retrieved),
        AblationCell::new(PromptFormat::new(FormatKind::QueriesOnly), 5, Selection::Retrieved),
    ];
    let v = per_cell(b, &grid)?;
    check(v[0] >= v[1], format!("Doc-Only {:.4} vs Queries-Only {:.4}", v[0], v[1]))
}

fn c9_k_sweep(b: &Bench) -> Outcome {
    let grid: Vec<AblationCell> = [0, 1, 5]
        .iter()
        .map(|&k| AblationCell::new(PromptFormat::new(FormatKind::InstIC), k, Selection::Retrieved))
        .collect();
    let v = per_cell(b, &grid)?;
    check(
        v[2] >= v[1] && v[1] >= v[0],
        format!("k=0 {:.4}, k=1 {:.4}, k=5 {:.4}", v[0], v[1], v[2]),
    )
}

fn c10_latency(b: &Bench) -> Outcome {
    let inputs = BenchInputs {
        dataset: "synth",
        queries: &b.dataset.queries,
        instruction: &b.dataset.instruction,
        pool: b.dataset.pool.as_ref(),
        index: &b.main_index,
        params: &b.main_model,
        format: PromptFormat::new(FormatKind::InstIC),
        k: 5,
        top_k: 10,
    };
    let mut reports = vec![
        bench::profile(&inputs, Setting::Inst, 5).map_err(|e| e.to_string())?,
        bench::profile(&inputs, Setting::InstIC, 5).map_err(|e| e.to_string())?,
    ];
    bench::attach_inc_factors(&mut reports);
    let res = bench::timer_resolution().as_secs_f64();
    let additive = reports
        .iter()
        .all(|r| (r.total_s - (r.nn_s + r.query_s + r.search_s)).abs() <= 2.0 * res * 3.0);
    let (inst, ic) = (&reports[0], &reports[1]);
    let ratio = ic.search_s / inst.search_s;
    let inc = format!("{:.2}", bench::inc_factor(153.76, 3.84));
    check(
        additive && inst.nn_s == 0.0 && ic.avg_q_len > inst.avg_q_len && (0.5..=2.0).contains(&ratio) && inc == "40.04",
        format!(
            "additive {additive}, Inst NN {}, avg_q_len {:.1} > {:.1}, search ratio {ratio:.2}, inc {inc}",
            inst.nn_s, ic.avg_q_len, inst.avg_q_len
        ),
    )
}

fn cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_rare"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(format!("rare {} failed: {}", args.join(" "), String::from_utf8_lossy(&status.stderr)))
    }
}

fn pipeline(dir: &Path) -> Result<Vec<Vec<u8>>, String> {
    cli(dir, &["synth", "--out", "data"])?;
    cli(dir, &["train", "--data", "data/train.jsonl", "--epochs", "2", "--out", "model.bin"])?;
    cli(dir, &["index", "--corpus", "data/corpus.jsonl", "--model", "model.bin", "--out", "index.bin"])?;
    cli(
        dir,
        &[
            "eval", "--qrels", "data/qrels.tsv", "--model", "model.bin", "--index", "index.bin", "--queries",
            "data/queries.jsonl", "--pool", "data/pool.jsonl", "--instruction-file", "data/instruction.txt", "--out",
            "report.json",
        ],
    )?;
    ["model.bin", "index.bin", "report.json", "model.bin.log.jsonl"]
        .iter()
        .map(|f| std::fs::read(dir.join(f)).map_err(|e| format!("{f}: {e}")))
        .collect()
}

fn c11_determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = pipeline(a.path())?;
    let second = pipeline(b.path())?;
    let sizes: Vec<usize> = first.iter().map(Vec::len).collect();
    check(
        first == second,
        format!("model, index, report and log byte-identical across two runs (sizes {sizes:?})"),
    )
}

fn run(n: usize, f: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let secs = t0.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => {
            println!("criterion {n}: PASS {detail} [{secs:.1}s]");
            true
        }
        Err(detail) => {
            println!("criterion {n}: FAIL {detail} [{secs:.1}s]");
            false
        }
    }
}

fn main() {
    let mut ok = true;
    ok &= run(1, c1_bm25);
    ok &= run(2, c2_ndcg);
    ok &= run(3, c3_flat);
    ok &= run(4, c4_gradients);
    ok &= run(5, c5_prompts);
    let bench = setup();
    ok &= run(6, || c6_mechanism(&bench));
    ok &= run(7, || c7_selection(&bench));
    ok &= run(8, || c8_formats(&bench));
    ok &= run(9, || c9_k_sweep(&bench));
    ok &= run(10, || c10_latency(&bench));
    ok &= run(11, c11_determinism);
    if !ok {
        std::process::exit(1);
    }
}
