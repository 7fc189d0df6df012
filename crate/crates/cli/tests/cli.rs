use std::path::Path;
use std::process::{Command, Output};

use htnet::graph::read_dataset;
use htnet::training::{CHECKPOINT_VERSION, CONFIG_VERSION};

fn htnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_htnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = htnet(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn version_lists_format_versions() {
    let v = ok(&["--version"]);
    assert!(v.contains(env!("CARGO_PKG_VERSION")));
    let long = ok(&["--help"]);
    assert!(long.contains("generate") && long.contains("wl-check"));
    let out = Command::new(env!("CARGO_BIN_EXE_htnet")).arg("-V").output().unwrap();
    assert!(out.status.success());
    let long = String::from_utf8(Command::new(env!("CARGO_BIN_EXE_htnet")).arg("--version").output().unwrap().stdout).unwrap();
    assert!(long.contains(&format!("checkpoint format: {CHECKPOINT_VERSION}")));
    assert!(long.contains(&format!("training config format: {CONFIG_VERSION}")));
}

#[test]
fn generate_is_deterministic_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    ok(&["generate", "--setup", "6", "--count", "5", "--seed", "3", "--out", s(&a)]);
    ok(&["--threads", "3", "generate", "--setup", "6", "--count", "5", "--seed", "3", "--out", s(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let d = read_dataset(&a).unwrap();
    assert_eq!(d.len(), 5);
    assert!(d.iter().all(|d| d.len() == 100));
}

#[test]
fn empty_dataset_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("e.jsonl");
    let table = ok(&["generate", "--setup", "1", "--count", "0", "--out", s(&p), "--stats"]);
    assert!(table.contains("deployments      0"));
    assert_eq!(std::fs::read(&p).unwrap().len(), 0);
    assert!(read_dataset(&p).unwrap().is_empty());
    let json = ok(&["stats", "--data", s(&p), "--json"]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["deployments"], 0);
}

#[test]
fn bad_inputs_fail_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = htnet(&["generate", "--setup", "9", "--count", "1", "--out", s(&dir.path().join("x"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = htnet(&["generate", "--setup", "1", "--count", "1", "--out", "/nonexistent/dir/x.jsonl"]);
    assert!(!out.status.success());
    let out = htnet(&["eval", "--ckpt", s(&dir.path().join("none")), "--data", s(&dir.path().join("none"))]);
    assert!(!out.status.success());

    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "version = 99\n").unwrap();
    let data = dir.path().join("d.jsonl");
    ok(&["generate", "--setup", "1", "--count", "5", "--out", s(&data)]);
    let out = htnet(&["train", "--data", s(&data), "--config", s(&cfg), "--out", s(&dir.path().join("m"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("version 99"));

    let ckpt = dir.path().join("bad.ckpt");
    let mut bytes = b"HTNETCKP".to_vec();
    bytes.extend(7u32.to_le_bytes());
    std::fs::write(&ckpt, bytes).unwrap();
    let out = htnet(&["eval", "--ckpt", s(&ckpt), "--data", s(&data)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("version 7"));
}

#[test]
fn oracle_checkpoint_scores_zero_and_predict_counts_rows() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    let ckpt = dir.path().join("o.ckpt");
    ok(&["generate", "--setup", "2", "--count", "5", "--seed", "1", "--out", s(&data)]);
    ok(&["train", "--model", "oracle", "--data", s(&data), "--out", s(&ckpt)]);
    let report: serde_json::Value =
        serde_json::from_str(&ok(&["eval", "--ckpt", s(&ckpt), "--data", s(&data), "--split", "all", "--json"])).unwrap();
    assert_eq!(report["rmse"], 0.0);
    assert_eq!(report["mae"], 0.0);

    let csv = dir.path().join("p.csv");
    ok(&["predict", "--ckpt", s(&ckpt), "--data", s(&data), "--out", s(&csv)]);
    let rows = std::fs::read_to_string(&csv).unwrap().lines().count() - 1;
    let d = read_dataset(&data).unwrap();
    let attached: usize = d
        .iter()
        .flat_map(|d| &d.snapshots)
        .map(|s| s.nodes.iter().filter(|n| n.is_target()).count())
        .sum();
    assert_eq!(rows, attached);
}

#[test]
fn train_eval_pipeline_with_config_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    ok(&["generate", "--setup", "5", "--count", "10", "--seed", "2", "--out", s(&data)]);
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "version = 1\nepochs = 50\nbatch_size = 2\n[model]\nlayers = 1\n").unwrap();
    let ckpt = dir.path().join("m.ckpt");
    let hist = dir.path().join("h.csv");
    ok(&[
        "--threads", "1", "train", "--data", s(&data), "--config", s(&cfg), "--epochs", "2", "--width", "8", "--out", s(&ckpt),
        "--history", s(&hist),
    ]);
    let h = std::fs::read_to_string(&hist).unwrap();
    assert_eq!(h.lines().count(), 3, "{h}");
    assert!(h.starts_with("epoch,train_rmse,val_rmse,seconds"));
    let text = ok(&["eval", "--ckpt", s(&ckpt), "--data", s(&data)]);
    assert!(text.contains("RMSE") && text.contains("setup 5"));

    for model in ["static", "sinr", "mlp"] {
        let p = dir.path().join(format!("{model}.ckpt"));
        ok(&["train", "--model", model, "--data", s(&data), "--epochs", "1", "--width", "4", "--out", s(&p)]);
        let r: serde_json::Value = serde_json::from_str(&ok(&["eval", "--ckpt", s(&p), "--data", s(&data), "--json"])).unwrap();
        assert!(r["rmse"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn depth_study_and_wl_check() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    ok(&["generate", "--setup", "1", "--count", "5", "--out", s(&data)]);
    let csv = ok(&["depth-study", "--data", s(&data), "--k-max", "2", "--epochs", "1", "--width", "4"]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "layers,test_rmse,test_mae,inference_ms,params");
    assert_eq!(lines.len(), 3);
    let wl = ok(&["wl-check", "--max-nodes", "8"]);
    assert!(wl.trim_end().ends_with("PASS"), "{wl}");
}
