mod common;

use std::fs;
use std::path::Path;

use common::{mimic, DotTree};
use mimic::io;
use mimic::model_file::{load_model, StoredModel};
use mimic_core::data::{flatten, impute_missing, FeatureView};

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = mimic(args, cwd);
    assert!(
        out.status.success(),
        "mimic {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(cwd: &Path, n: &str) {
    ok(&["synth", "--n-samples", n, "--seed", "3", "-o", "data.csv"], cwd);
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--n-samples", "40", "--seed", "5", "-o", "a"], dir.path());
    ok(&["synth", "--n-samples", "40", "--seed", "5", "-o", "b"], dir.path());
    ok(&["synth", "--n-samples", "40", "--seed", "6", "-o", "c"], dir.path());
    let read = |d: &str| fs::read(dir.path().join(d).join("data.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    let run: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("a/run.json")).unwrap()).unwrap();
    assert_eq!(run["command"], "synth");
    assert_eq!(run["settings"]["synth"]["n_samples"], 40);
}

#[test]
fn config_file_sets_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), r#"{"seed": 8, "synth": {"n_samples": 30, "t_steps": 3}}"#).unwrap();
    ok(&["--config", "cfg.json", "synth", "--t-steps", "2", "-o", "d.csv"], dir.path());
    let ds = io::load_dataset(&dir.path().join("d.csv")).unwrap();
    assert_eq!((ds.n_samples(), ds.t_steps()), (30, 2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| mimic(args, dir.path()).status.code();
    assert_eq!(code(&["--help"]), Some(0));
    assert_eq!(code(&["synth", "--bogus"]), Some(1));
    assert_eq!(code(&["train", "--method", "NOPE"]), Some(1));
    assert_eq!(code(&["synth", "--missing-rate", "2"]), Some(1));
    fs::write(dir.path().join("bad.json"), r#"{"synth": {"n_sample": 3}}"#).unwrap();
    let out = mimic(&["--config", "bad.json", "synth"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_sample"));
    assert_eq!(code(&["train", "--data", "missing.csv"]), Some(2));
    assert_eq!(code(&["gradcheck", "--model", "mlp", "--eps", "0.5", "--tolerance", "1e-12"]), Some(2));
}

#[test]
fn gradcheck_passes_for_every_network() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ["mlp", "sda", "lstm"] {
        let stdout = ok(&["gradcheck", "--model", kind, "-o", kind], dir.path());
        assert!(stdout.contains("max relative error"), "{stdout}");
        let report: serde_json::Value =
            serde_json::from_slice(&fs::read(dir.path().join(kind).join("gradcheck.json")).unwrap()).unwrap();
        assert!(report["max_rel_error"].as_f64().unwrap() < 1e-4);
    }
}

#[test]
fn exported_tree_traces_like_the_model() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "80");
    ok(&["train", "--data", "data.csv", "--method", "DT", "-o", "dt"], dir.path());
    ok(&["train", "--data", "data.csv", "--method", "GBT", "-o", "gbt"], dir.path());
    let ds = impute_missing(&io::load_dataset(&dir.path().join("data.csv")).unwrap()).unwrap();
    let x = flatten(&ds, FeatureView::All).unwrap().values;
    for (model, stage) in [("dt", 0), ("gbt", 0), ("gbt", 57)] {
        let out = format!("{model}{stage}.dot");
        let path = format!("{model}/model.json");
        ok(&["export-tree", "--model", &path, "--stage", &stage.to_string(), "-o", &out], dir.path());
        let dot = DotTree::parse(&fs::read_to_string(dir.path().join(&out)).unwrap()).unwrap();
        let stored = load_model(&dir.path().join(&path)).unwrap();
        let tree = stored.tree(0, stage).unwrap();
        assert_eq!(dot.n_leaves(), tree.n_leaves());
        for i in 0..x.rows {
            assert_eq!(dot.trace(x.row(i)).to_bits(), tree.predict_row(x.row(i)).to_bits());
        }
    }
}

#[test]
fn train_and_distill_write_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "80");
    let stdout = ok(
        &["train", "--data", "data.csv", "--method", "LR-SDA", "--epochs", "2", "--holdout", "0.25", "-o", "t"],
        dir.path(),
    );
    assert!(stdout.contains("held-out AUC"));
    assert!(matches!(load_model(&dir.path().join("t/model.json")).unwrap(), StoredModel::Neural(n) if n.lr_head.is_some()));
    let log: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("t/train_log.json")).unwrap()).unwrap();
    assert_eq!((log["n_train"].as_u64(), log["n_test"].as_u64()), (Some(60), Some(20)));

    ok(&["distill", "--data", "data.csv", "--teacher", "dnn", "--pipeline", "p2", "--epochs", "2", "-o", "m"], dir.path());
    let fid: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("m/fidelity.json")).unwrap()).unwrap();
    assert_eq!(fid["student"], "GBTmimic-DNN");
    assert_eq!(fid["n_rows"], 16);
    assert!(matches!(load_model(&dir.path().join("m/mimic.json")).unwrap(), StoredModel::Mimic(_)));
}

#[test]
fn bench_is_reproducible_and_feeds_importance() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "60");
    let args = |out: &'static str, threads: &'static str| {
        [
            "bench", "--data", "data.csv", "--methods", "GBT,DNN,DTmimic-LR-DNN", "--views", "all,temporal_only", "--tasks",
            "MOR", "--trials", "2", "--folds", "3", "--epochs", "2", "--threads", threads, "--save-models", "-o", out,
        ]
    };
    ok(&args("one", "1"), dir.path());
    ok(&args("two", "4"), dir.path());
    for f in ["report.json", "report.txt", "models/mor_all_GBT.json", "models/mor_temporal_only_DTmimic-LR-DNN.json"] {
        let a = fs::read(dir.path().join("one").join(f)).unwrap();
        assert_eq!(a, fs::read(dir.path().join("two").join(f)).unwrap(), "{f}");
    }
    let text = fs::read_to_string(dir.path().join("one/report.txt")).unwrap();
    assert!(text.contains("AUC(diff)"), "{text}");

    let stdout = ok(&["importance", "one/models", "-k", "4", "-o", "imp"], dir.path());
    assert_eq!(stdout.lines().filter(|l| l.starts_with("GBT ")).count(), 2);
    let entries: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("imp/importance.json")).unwrap()).unwrap();
    let entries = entries.as_array().unwrap();
    assert_eq!(entries.len(), 4);
    for e in entries {
        let scores: f64 = e["report"]["scores"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
        assert!((scores - 1.0).abs() < 1e-9);
        assert_eq!(e["report"]["top_k"].as_array().unwrap().len(), 4);
        assert_eq!(e["report"]["n_models"], 6);
    }
}
