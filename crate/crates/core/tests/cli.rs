use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rare(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rare"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = rare(dir, args);
    assert!(
        out.status.success(),
        "rare {} -> {:?}\n{}",
        args.join(" "),
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const EMBED: [&str; 4] = ["--hash-dim", "4096", "--dim", "16"];

#[test]
fn pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["synth", "--clusters", "4", "--out", "data"]);
    let mut train = vec!["train", "--data", "data/train.jsonl", "--epochs", "2", "--out", "model.bin"];
    train.extend(EMBED);
    ok(dir, &train);
    assert!(dir.join("model.bin.log.jsonl").exists());
    assert!(dir.join("model.bin.manifest.json").exists());
    ok(dir, &["index", "--corpus", "data/corpus.jsonl", "--model", "model.bin", "--out", "index.bin"]);
    let common = [
        "--model", "model.bin", "--index", "index.bin", "--queries", "data/queries.jsonl", "--pool",
        "data/pool.jsonl", "--instruction-file", "data/instruction.txt",
    ];
    let mut search = vec!["search", "--out", "run.trec"];
    search.extend(common);
    ok(dir, &search);
    let run = fs::read_to_string(dir.join("run.trec")).unwrap();
    assert_eq!(run.lines().count(), 4 * 20 * 10);

    let mut eval = vec!["eval", "--qrels", "data/qrels.tsv", "--out", "report.json"];
    eval.extend(common);
    let out = ok(dir, &eval);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("report.json")).unwrap()).unwrap();
    let mean = report["mean"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&mean));
    assert_eq!(report["n_evaluated"], 80);
    assert!(!out.stdout.is_empty());

    let from_run = ok(
        dir,
        &["eval", "--qrels", "data/qrels.tsv", "--run", "run.trec", "--out", "report2.json"],
    );
    assert!(from_run.status.success());
    let again: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("report2.json")).unwrap()).unwrap();
    assert_eq!(again["per_query"], report["per_query"]);

    ok(
        dir,
        &["bench", "--dataset", "data", "--model", "model.bin", "--index", "index.bin", "--reps", "2", "--out", "bench.csv"],
    );
    let csv = fs::read_to_string(dir.join("bench.csv")).unwrap();
    assert!(csv.starts_with("Dataset,#Corpus,Setting,AvgQLen,NN,Query,Search,Total,Inc"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn no_arguments_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(rare(tmp.path(), &[]).status.code(), Some(1));
    assert_eq!(rare(tmp.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(rare(tmp.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = rare(tmp.path(), &["eval", "--qrels", "nowhere/qrels.tsv", "--run", "run.trec", "--out", "r.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere/qrels.tsv"));
}

#[test]
fn config_file_fills_unset_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("run.conf"), "# synth settings\nclusters = 3\nseed = 11\n").unwrap();
    ok(dir, &["--config", "run.conf", "synth", "--out", "a"]);
    let spec: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("a/spec.json")).unwrap()).unwrap();
    assert_eq!(spec["n_clusters"], 3);
    assert_eq!(spec["seed"], 11);

    ok(dir, &["--config", "run.conf", "synth", "--clusters", "2", "--out", "b"]);
    let spec: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("b/spec.json")).unwrap()).unwrap();
    assert_eq!(spec["n_clusters"], 2);
    assert_eq!(spec["seed"], 11);

    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("b/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "synth");
}

#[test]
fn ablate_writes_one_row_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["synth", "--clusters", "3", "--out", "data"]);
    let mut args = vec![
        "ablate", "--dataset", "data", "--train", "data/train.jsonl", "--grid", "inst:0,inst+ic:1", "--epochs", "1", "--out",
        "table.csv",
    ];
    args.extend(EMBED);
    ok(dir, &args);
    let csv = fs::read_to_string(dir.join("table.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "Setting,data,Average");
}
