use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use clap::Parser;
use rul_forge::cli::{Cli, Command as Sub};
use rul_forge::model::Checkpoint;

const SMALL: [&str; 10] = [
    "--hidden", "8", "--proj", "8", "--corrector-hidden", "8", "--blocks", "1", "--max-epochs", "2",
];

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rul-forge"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fleet(dir: &Path, regimes: bool) {
    let mut spec = serde_json::json!({
        "train_units": 12, "test_units": 5, "min_lifetime": 60, "max_lifetime": 100
    });
    if regimes {
        spec["regime_centers"] = serde_json::to_value(rul_forge::synthetic::SIX_REGIME_CENTERS).unwrap();
    }
    fs::write(dir.join("spec.json"), spec.to_string()).unwrap();
}

fn with_small<'a>(head: &[&'a str]) -> Vec<&'a str> {
    let mut v = head.to_vec();
    v.extend(SMALL);
    v
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["train", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["train", "--subset", "FD009"]).status.code(), Some(2));
    assert_eq!(
        run(dir.path(), &["gradcheck", "--variant", "gru"]).status.code(),
        Some(2)
    );
}

#[test]
fn missing_data_exits_3_naming_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["preprocess", "--subset", "FD003"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train_FD003.txt"));
}

#[test]
fn gradcheck_passes_and_its_negative_control_fails() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(dir.path(), &["gradcheck"]);
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["passed"], true);
    assert!(report["max_rel_err"].as_f64().unwrap() < 1e-4);
    assert!(report["groups"].as_array().unwrap().len() > 10);
    let bad = run(dir.path(), &["gradcheck", "--corrupt-rule", "tanh"]);
    assert_eq!(bad.status.code(), Some(4));
}

#[test]
fn defaults_follow_the_reference_model() {
    let cli = Cli::try_parse_from(["rul-forge", "ablate", "--subset", "FD001"]).unwrap();
    match cli.command {
        Sub::Ablate(a) => {
            assert_eq!(a.sweep, vec![2, 4, 6, 8, 10]);
            assert_eq!(a.train.model.blocks, 4);
            assert_eq!(a.train.model.variant, rul_forge::model::Variant::BiCLstm);
            assert_eq!(a.train.data.seed, 42);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn preprocess_is_deterministic_and_picks_the_mode() {
    let dir = tempfile::tempdir().unwrap();
    fleet(dir.path(), false);
    ok(dir.path(), &["preprocess", "--synthetic", "spec.json", "--out-dir", "a"]);
    ok(dir.path(), &["preprocess", "--synthetic", "spec.json", "--out-dir", "b"]);
    for name in ["synthetic_pipeline.json", "synthetic_train.rulw", "synthetic_val.rulw", "synthetic_test.rulw"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        assert_eq!(a, fs::read(dir.path().join("b").join(name)).unwrap(), "{name}");
    }
    let p: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("a/synthetic_pipeline.json")).unwrap()).unwrap();
    assert_eq!(p["mode"], "single-condition");

    let six = tempfile::tempdir().unwrap();
    fleet(six.path(), true);
    let csv = ok(six.path(), &["preprocess", "--synthetic", "spec.json", "--format", "csv"]);
    assert!(csv.lines().nth(1).unwrap().contains("multi-condition"));
    let p: serde_json::Value =
        serde_json::from_slice(&fs::read(six.path().join("out/synthetic_pipeline.json")).unwrap()).unwrap();
    assert_eq!(p["sensors"]["model"]["centroids"].as_array().unwrap().len(), 6);
}

#[test]
fn train_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    fleet(dir.path(), false);
    ok(dir.path(), &["preprocess", "--synthetic", "spec.json"]);
    ok(dir.path(), &with_small(&["train", "--synthetic", "spec.json", "--variant", "lstm"]));
    let ckpt = Checkpoint::load(&dir.path().join("out/synthetic_lstm_checkpoint.json")).unwrap();
    assert!(!ckpt.config.bidirectional && !ckpt.config.use_corrector);
    let history = fs::read_to_string(dir.path().join("out/synthetic_lstm_history.csv")).unwrap();
    assert!(history.lines().count() - 1 <= 2);

    let csv = ok(dir.path(), &["evaluate", "--synthetic", "spec.json", "--variant", "lstm", "--format", "csv"]);
    assert!(csv.starts_with("variant,rmse,mae_cycles,mae_normalized,r2\nLSTM,"));
    for f in ["report.json", "predictions.csv", "fig2_series.csv"] {
        assert!(dir.path().join(format!("out/synthetic_lstm_{f}")).exists(), "{f}");
    }
    let evaluate_missing = run(dir.path(), &["evaluate", "--synthetic", "spec.json", "--variant", "bilstm"]);
    assert_eq!(evaluate_missing.status.code(), Some(3));
}

#[test]
fn ablation_rows_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    fleet(dir.path(), false);
    ok(dir.path(), &["preprocess", "--synthetic", "spec.json"]);
    let args = with_small(&["ablate", "--synthetic", "spec.json", "--sweep", "1,2", "--variant", "lstm"]);
    ok(dir.path(), &args);
    let first = fs::read_to_string(dir.path().join("out/synthetic_ablation.csv")).unwrap();
    let lines: Vec<&str> = first.lines().collect();
    assert_eq!(lines[0], "dataset,blocks,rmse");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("synthetic,1,") && lines[2].starts_with("synthetic,2,"));
    ok(dir.path(), &args);
    assert_eq!(fs::read_to_string(dir.path().join("out/synthetic_ablation.csv")).unwrap(), first);
}

#[test]
fn baselines_cover_the_four_architectures() {
    let dir = tempfile::tempdir().unwrap();
    fleet(dir.path(), false);
    ok(dir.path(), &["preprocess", "--synthetic", "spec.json"]);
    ok(dir.path(), &with_small(&["baselines", "--synthetic", "spec.json"]));
    let csv = fs::read_to_string(dir.path().join("out/synthetic_baselines.csv")).unwrap();
    let names: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["LSTM", "cLSTM", "Bi-LSTM", "Bi-cLSTM"]);
    assert_eq!(csv.lines().next().unwrap(), "variant,rmse,mae_cycles,mae_normalized,r2");
    for token in ["lstm", "clstm", "bilstm", "biclstm"] {
        assert!(dir.path().join(format!("out/synthetic_{token}_report.json")).exists());
    }
}

#[test]
fn synth_writes_parseable_files() {
    let dir = tempfile::tempdir().unwrap();
    fleet(dir.path(), false);
    let msg = ok(dir.path(), &["synth", "--synthetic", "spec.json", "--out-dir", "data"]);
    assert!(msg.contains("12 training and 5 test units"));
    let data = rul_forge::cmapss::load_files(&dir.path().join("data"), "synthetic").unwrap();
    assert_eq!((data.train.len(), data.test.len(), data.test_rul.len()), (12, 5, 5));
}
