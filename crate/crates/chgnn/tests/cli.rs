mod common;

use chgnn::report::read_report;
use chgnn::run::Metrics;
use common::*;
use serde_json::Value;

#[test]
fn train_writes_every_artifact_and_eval_reproduces_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_toy(dir.path());
    let config = write_config(dir.path(), "cfg.json", r#"{"epochs": 15, "nhid": 8, "seed": 4}"#);
    let out = dir.path().join("run");
    let res = chgnn(&[&"train", &"--config", &config, &"--data", &data, &"--out", &out]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["metrics.json", "losses.jsonl", "checkpoint.bin", "embeddings.tsv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let metrics: Metrics = serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics.fold_accuracies.len(), 1);

    let lines = std::fs::read_to_string(out.join("losses.jsonl")).unwrap();
    let rows: Vec<Value> = lines.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 15);
    assert_eq!(rows[3]["epoch"], 3);
    assert!(rows[0]["L_total"].is_f64() && rows[0]["L_cls"].is_f64());

    let emb = std::fs::read_to_string(out.join("embeddings.tsv")).unwrap();
    let first: Vec<&str> = emb.lines().next().unwrap().split('\t').collect();
    assert_eq!(emb.lines().count(), 8);
    assert_eq!((first[0], first.len()), ("0", 9));

    let ckpt = out.join("checkpoint.bin");
    let res = chgnn(&[&"eval", &"--checkpoint", &ckpt, &"--data", &data]);
    assert!(res.status.success());
    let v: Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(v["test_accuracy"].as_f64().unwrap(), metrics.mean_accuracy);
}

#[test]
fn invalid_config_exits_nonzero_with_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_toy(dir.path());
    let config = write_config(dir.path(), "bad.json", r#"{"p_node": 1.5}"#);
    let res = chgnn(&[&"train", &"--config", &config, &"--data", &data, &"--out", &dir.path().join("o")]);
    assert!(!res.status.success());
    let err: Value = serde_json::from_slice(&res.stderr).unwrap();
    assert_eq!(err["error"], "config");
    assert_eq!(err["field"], "p_node");
}

#[test]
fn malformed_dataset_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_config(
        dir.path(),
        "d.json",
        r#"{"num_nodes":2,"num_classes":1,"hyperedges":[[0,7]],"features":[[1],[1]]}"#,
    );
    let res = chgnn(&[&"stats", &"--data", &data, &"--out", &dir.path().join("s.json")]);
    assert!(!res.status.success());
    let err: Value = serde_json::from_slice(&res.stderr).unwrap();
    assert_eq!(err["error"], "validation");
    assert!(err["message"].as_str().unwrap().contains("node 7"));
}

#[test]
fn stats_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_separable(dir.path(), false);
    let out = dir.path().join("stats.json");
    let res = chgnn(&[&"stats", &"--data", &data, &"--out", &out]);
    assert!(res.status.success());
    let report = read_report(&out).unwrap();
    assert_eq!(report.homogeneity.len(), 8);
    assert_eq!(report.overlapness.len(), 40);
    assert_eq!(report.size_histogram.get(&5), Some(&8));
    assert_eq!(report.degree_histogram.values().sum::<usize>(), 40);
}

#[test]
fn folds_cover_every_node_once() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_separable(dir.path(), false);
    let config = write_config(dir.path(), "cfg.json", r#"{"epochs": 3, "nhid": 8, "folds": 4}"#);
    let out = dir.path().join("cv");
    let res = chgnn(&[&"folds", &"--config", &config, &"--data", &data, &"--out", &out]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let metrics: Metrics = serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics.fold_accuracies.len(), 4);
    assert_eq!(metrics.losses.len(), 4);
    assert!(metrics.std_accuracy >= 0.0);
    assert!(metrics.fold_accuracies.iter().all(|a| (0.0..=1.0).contains(a)));
    let rows = std::fs::read_to_string(out.join("losses.jsonl")).unwrap();
    assert_eq!(rows.lines().count(), 12);
}
