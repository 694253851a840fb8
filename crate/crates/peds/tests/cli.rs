use std::path::Path;
use std::process::{Command, Output};

fn peds(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_peds")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_train_eval_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    let ckpt = dir.path().join("c.json");
    let log = dir.path().join("log.jsonl");
    let out = peds(&["gen-data", "--family", "fourier16", "--n", "12", "--resolution", "20", "--out", s(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(Path::new(&format!("{}.timing.json", s(&data))).exists());

    let out = peds(&[
        "train", "--data", s(&data), "--epochs", "2", "--ensemble", "2", "--hidden", "16", "--batch-size", "4",
        "--log", s(&log), "--out", s(&ckpt),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = std::fs::read_to_string(&log).unwrap();
    let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    for key in ["epoch", "train_loss", "val_loss", "w", "wallclock"] {
        assert!(first.get(key).is_some(), "{key} missing from {first}");
    }
    assert_eq!(lines.lines().count(), 4);

    let out = peds(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data)]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["n_test"], 12);

    let widths = vec!["0.5"; 16].join(",");
    let out = peds(&["predict", "--checkpoint", s(&ckpt), "--widths", &widths]);
    assert!(out.status.success());
    let pred: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(pred["mean"][0].as_f64().unwrap().is_finite());
    assert!(pred["sigma"].as_f64().unwrap() >= 0.0);
}

#[test]
fn nn_only_and_config_override() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    let ckpt = dir.path().join("c.json");
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"n": 5, "resolution": 10}"#).unwrap();
    let out = peds(&["--config", s(&cfg), "gen-data", "--family", "fisher16", "--n", "50", "--out", s(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&data).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.contains("\"hf_resolution\":10"));

    let out = peds(&[
        "train", "--data", s(&data), "--model", "nn-only", "--epochs", "1", "--ensemble", "1", "--hidden", "8",
        "--out", s(&ckpt),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let c: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&ckpt).unwrap()).unwrap();
    assert_eq!(c["model"]["kind"], "nn_only");

    std::fs::write(&cfg, r#"{"bogus": 1}"#).unwrap();
    let out = peds(&["--config", s(&cfg), "gen-data", "--family", "fisher16", "--n", "1", "--out", s(&data)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn active_learn_writes_dataset_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("c.json");
    let data = dir.path().join("al.jsonl");
    let acq = dir.path().join("acq.json");
    let out = peds(&[
        "active-learn", "--family", "fourier16", "--resolution", "12", "--n-init", "8", "--iterations", "2", "--m", "3",
        "--k", "4", "--epochs", "2", "--ensemble", "2", "--hidden", "8", "--out", s(&ckpt), "--data-out", s(&data),
        "--acquisitions", s(&acq),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&data).unwrap();
    assert_eq!(text.lines().count(), 1 + 8 + 2 * 4);
    let log: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&acq).unwrap()).unwrap();
    assert_eq!(log.as_array().unwrap().len(), 8);
}

#[test]
fn exit_codes() {
    let out = peds(&["gen-data", "--family", "nope", "--n", "1", "--out", "/dev/null"]);
    assert_eq!(out.status.code(), Some(2));
    let out = peds(&["eval", "--checkpoint", "/nonexistent.json", "--data", "/nonexistent.jsonl"]);
    assert_eq!(out.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    let ckpt = dir.path().join("c.json");
    assert!(peds(&["gen-data", "--family", "fourier16", "--n", "3", "--resolution", "8", "--out", s(&data)])
        .status
        .success());
    assert!(peds(&["train", "--data", s(&data), "--epochs", "1", "--ensemble", "1", "--hidden", "4", "--out", s(&ckpt)])
        .status
        .success());
    let out = peds(&["predict", "--checkpoint", s(&ckpt), "--widths", "0.5,0.5"]);
    assert_eq!(out.status.code(), Some(2));
    let widths = vec!["1.5"; 16].join(",");
    let out = peds(&["predict", "--checkpoint", s(&ckpt), "--widths", &widths]);
    assert_eq!(out.status.code(), Some(2));
}
