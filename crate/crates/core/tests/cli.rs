use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tawq::Checkpoint;

const TINY: &str = r#"
[network]
precision = "tawq"
quantize_first = true
layers = [
  { kind = "qlinear", out_features = 8 },
  { kind = "bn" },
  { kind = "lif" },
  { kind = "qlinear", out_features = 2 },
]

[quant]
timesteps = 4

[train]
epochs = 2
batch_size = 16
seed = 3

[dataset]
kind = "synthetic-temporal-xor"
n_samples = 80
timesteps = 4
seed = 9
"#;

fn tawq(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tawq"))
        .current_dir(dir)
        .env("TAWQ_THREADS", "2")
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes the tiny config, trains it and returns the checkpoint path.
fn trained(dir: &Path, extra: &[&str]) -> (PathBuf, serde_json::Value) {
    fs::write(dir.join("run.toml"), TINY).unwrap();
    let mut args = vec!["train", "--config", "run.toml"];
    args.extend_from_slice(extra);
    let o = tawq(dir, &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = serde_json::from_slice(&o.stdout).unwrap();
    (dir.join("run.tawq"), summary)
}

#[test]
fn missing_section_is_config_error_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let text = TINY.split("[dataset]").next().unwrap();
    fs::write(dir.path().join("bad.toml"), text).unwrap();
    let o = tawq(dir.path(), &["train", "--config", "bad.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dataset"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), TINY.replace("epochs = 2", "epoch = 2")).unwrap();
    let o = tawq(dir.path(), &["train", "--config", "bad.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("train") && stderr(&o).contains("epoch"), "{}", stderr(&o));
}

#[test]
fn bad_thread_count_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_tawq"))
        .current_dir(dir.path())
        .env("TAWQ_THREADS", "zero")
        .args(["fold", "x.tawq"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("TAWQ_THREADS"));
}

/// Final epoch train loss of `TINY`, recorded once from a clean run.
const GOLDEN_LOSS: f64 = 0.6769388807798382;

#[test]
fn seeded_training_is_pinned() {
    let dir = tempfile::tempdir().unwrap();
    let (ckpt, summary) = trained(dir.path(), &[]);
    let loss = summary["final_train_loss"].as_f64().unwrap();
    assert!((loss - GOLDEN_LOSS).abs() <= 1e-9, "final train loss {loss:?}");
    let again = tempfile::tempdir().unwrap();
    let (ckpt2, _) = trained(again.path(), &[]);
    assert_eq!(fs::read(ckpt).unwrap(), fs::read(ckpt2).unwrap());
    let log = fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
    assert!(log.lines().count() >= 2);
    for line in log.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
}

#[test]
fn ablation_flag_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let (ckpt, summary) = trained(dir.path(), &["--ablate-temporal", "--epochs", "1"]);
    assert_eq!(summary["ablate_temporal"], true);
    let cfg = Checkpoint::load(&ckpt).unwrap().config().unwrap();
    assert!(cfg.train.ablate_temporal);
    assert_eq!(cfg.train.epochs, 1);
}

#[test]
fn infer_is_repeatable_and_fold_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d, &[]);
    let o = tawq(d, &["gen-data", "--config", "run.toml", "--split", "test", "--out", "test.twds"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = tawq(d, &["infer", "run.tawq", "test.twds"]);
    let b = tawq(d, &["infer", "run.tawq", "test.twds"]);
    let c = tawq(d, &["infer", "run.tawq", "test.twds", "--unfolded"]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    assert_eq!(String::from_utf8_lossy(&a.stdout).lines().count(), 16);
}

#[test]
fn empty_input_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path(), &["--epochs", "1"]);
    fs::write(dir.path().join("empty.twds"), b"").unwrap();
    let o = tawq(dir.path(), &["infer", "run.tawq", "empty.twds"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("empty"));
}

#[test]
fn corrupt_checkpoint_fails_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let (ckpt, _) = trained(dir.path(), &["--epochs", "1"]);
    let mut bytes = fs::read(&ckpt).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    fs::write(&ckpt, bytes).unwrap();
    let o = tawq(dir.path(), &["fold", "run.tawq"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("checksum"), "{}", stderr(&o));
}

#[test]
fn report_and_fold_print_every_section() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path(), &["--epochs", "1"]);
    let o = tawq(dir.path(), &["report", "run.tawq"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8_lossy(&o.stdout);
    for section in ["weight entropy", "energy per sample", "hardware", "firing rates"] {
        assert!(table.contains(section), "{table}");
    }
    let o = tawq(dir.path(), &["report", "run.tawq", "--format", "json"]);
    let records: Vec<serde_json::Value> = String::from_utf8_lossy(&o.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(records.iter().any(|r| r["record"] == "energy_total"));
    let o = tawq(dir.path(), &["fold", "run.tawq"]);
    let stages: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(stages.as_array().unwrap().len(), 1);
    assert_eq!(stages[0]["channels"], 8);
}
