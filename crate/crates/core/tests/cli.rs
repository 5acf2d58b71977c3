use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::json;

use pdabench::harness::{load_dataset, load_report, RecordStore};

fn pdabench(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_pdabench"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "pdabench {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_json(path: &Path, value: serde_json::Value) -> String {
    fs::write(path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn tiny_spec() -> serde_json::Value {
    json!({"name": "tiny", "tasks": [{"id": "S2T", "seed": 5, "spec": {
        "dim": 6, "k_source": 4, "k_target": 2, "n_per_class_source": 15, "n_per_class_target": 12}}]})
}

fn tiny_train() -> serde_json::Value {
    json!({"total_iters": 20, "eval_interval": 10, "batch_size": 8, "hidden": [8], "bottleneck": 4,
           "weight_update_interval": 10, "ar_update_interval": 5,
           "schedule": {"mu0": 0.003, "alpha": 0.001, "beta": 0.75, "total_iters": 20}})
}

#[test]
fn data_train_grid_select_report() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let spec = write_json(&dir.path().join("spec.json"), tiny_spec());
    let train = write_json(&dir.path().join("train.json"), tiny_train());

    pdabench(&["gen-data", "--spec", &spec, "--out-dir", &p("data")]);
    let tasks = load_dataset(&dir.path().join("data")).unwrap();
    assert_eq!(tasks.len(), 1);
    assert_eq!(tasks[0].id, "S2T");

    let out = pdabench(&[
        "train", "--method", "pada", "--hp", "lambda=0.5", "--seed", "2021", "--embeddings", &p("data"),
        "--train-config", &train, "--out-dir", &p("train"),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("pada[lambda=0.5] seed 2021"));
    let runs = RecordStore::open(&dir.path().join("train/runs.jsonl")).unwrap().load().unwrap();
    assert_eq!(runs.len(), 1);
    assert_eq!(runs[0].checkpoints.iter().map(|c| c.iteration).collect::<Vec<_>>(), vec![0, 10, 20]);

    let grid = write_json(
        &dir.path().join("grid.json"),
        json!({"method": "safn", "values": {"lambda": [0.05], "delta_r": [0.1, 1.0]}}),
    );
    for _ in 0..2 {
        pdabench(&[
            "grid-search", "--grid", &grid, "--embeddings", &p("data"), "--train-config", &train,
            "--workers", "1", "--out-dir", &p("grid"),
        ]);
    }
    let grid_records = RecordStore::open(&dir.path().join("grid/grid.jsonl")).unwrap().load().unwrap();
    assert_eq!(grid_records.len(), 2, "rerunning the grid must not train stored points again");

    let out = pdabench(&["select", "--records", &p("grid/grid.jsonl"), "--scorer", "ORACLE"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("\"method\": \"safn\"") && text.contains("checkpoint iteration"));

    pdabench(&["report", "--records", &p("train/runs.jsonl"), "--seeds", "2021", "--out-dir", &p("report")]);
    let table = load_report(&dir.path().join("report/report.csv")).unwrap();
    assert_eq!(table.seeds, vec![2021]);
    assert!(fs::read_to_string(dir.path().join("report/report.md")).unwrap().contains("| PADA | ORACLE |"));
}

#[test]
fn protocol_command_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_json(
        &dir.path().join("protocol.json"),
        json!({"dataset": tiny_spec(), "methods": ["source_only", "pada"], "grids": {"pada": {"lambda": [0.1, 1.0]}},
               "scorers": ["ORACLE", "ENT"], "train": tiny_train()}),
    );
    let out_dir = dir.path().join("run");
    let out = pdabench(&[
        "protocol", "--config", &config, "--seeds", "2020,2021", "--out-dir", out_dir.to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("3 tuning runs, "));
    let table = load_report(&out_dir.join("report.csv")).unwrap();
    assert_eq!(table.seeds, vec![2020, 2021]);
    assert_eq!(table.methods(), vec!["source_only".to_string(), "pada".to_string()]);
    assert!(out_dir.join("selections.json").exists());
}

#[test]
fn bad_arguments_are_reported() {
    let out = Command::new(env!("CARGO_BIN_EXE_pdabench"))
        .args(["train", "--method", "pada", "--hp", "lambda", "--out-dir", "/nonexistent"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("expected key=value"));
}
