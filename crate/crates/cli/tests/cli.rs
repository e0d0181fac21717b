use std::path::Path;
use std::process::{Command, Output};

use deepfake_core::synthetic::{write_fixture, FixtureSpec};
use serde_json::Value;

fn deepfake(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deepfake"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn base_args(data: &Path, out: &Path) -> Vec<String> {
    [
        "--real-dir",
        &data.join("real").to_string_lossy(),
        "--fake-dir",
        &data.join("fake").to_string_lossy(),
        "--out",
        &out.to_string_lossy(),
        "--max-epochs",
        "3",
        "--window",
        "3",
        "--order",
        "2",
        "--n",
        "2",
        "--seed",
        "1",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn fixture(dir: &Path) {
    let spec = FixtureSpec {
        frames: 90,
        ..FixtureSpec::default()
    };
    write_fixture(dir, &spec).unwrap();
}

fn run(cmd: &str, extra: &[&str], data: &Path, out: &Path) -> Output {
    let base = base_args(data, out);
    let mut args = vec![cmd];
    args.extend(base.iter().map(String::as_str));
    args.extend(extra);
    deepfake(&args)
}

fn journal_statuses(run_dir: &Path) -> Vec<(String, String)> {
    std::fs::read_to_string(run_dir.join("journal.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            (v["stage"].as_str().unwrap().to_string(), v["status"].as_str().unwrap().to_string())
        })
        .collect()
}

#[test]
fn full_run_then_rerun_skips_everything() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    fixture(data.path());
    let first = run("run", &[], data.path(), out.path());
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let run_dir = out.path().join("default");
    assert_eq!(String::from_utf8_lossy(&first.stdout).trim(), run_dir.to_string_lossy());
    for rel in ["manifest.jsonl", "weights.json", "history.csv", "report.json", "confusion.png"] {
        assert!(run_dir.join(rel).is_file(), "missing {rel}");
    }
    for method in ["smoothgrad", "gradcam", "gradcam_pp", "faster_scorecam"] {
        let dir = run_dir.join("heatmaps").join(method);
        assert!(std::fs::read_dir(&dir).unwrap().count() > 0, "no {method} heatmaps");
    }
    let before = journal_statuses(&run_dir).len();

    let second = run("run", &[], data.path(), out.path());
    assert!(second.status.success());
    let after = journal_statuses(&run_dir);
    let new = &after[before..];
    assert_eq!(new.len(), 7);
    assert!(new.iter().all(|(_, s)| s == "skipped"), "{new:?}");
}

#[test]
fn bad_ratios_fail_before_any_work() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    fixture(data.path());
    let res = run("run", &["--ratios", "0.5,0.2,0.2"], data.path(), out.path());
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("ratios"));
    assert_eq!(std::fs::read_dir(out.path()).unwrap().count(), 0);
}

#[test]
fn weights_prints_json_and_flags_override_config_file() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    fixture(data.path());
    let config = out.path().join("config.json");
    std::fs::write(&config, r#"{"run_id": "from_file", "seed": 3, "window": 5}"#).unwrap();
    let res = run(
        "weights",
        &["--config", &config.to_string_lossy(), "--run-id", "from_flag"],
        data.path(),
        out.path(),
    );
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let weights: Value = serde_json::from_slice(&res.stdout).unwrap();
    for label in ["real", "fake"] {
        assert!(weights[label].as_f64().unwrap() > 0.0);
    }
    assert!(out.path().join("from_flag").join("weights.json").is_file());
    assert!(!out.path().join("from_file").exists());
    let stages: Vec<String> = journal_statuses(&out.path().join("from_flag")).into_iter().map(|e| e.0).collect();
    assert!(!stages.iter().any(|s| s == "train"));
}

#[test]
fn missing_input_directory_is_an_error() {
    let out = tempfile::tempdir().unwrap();
    let res = run("scan", &[], &out.path().join("nowhere"), out.path());
    assert!(!res.status.success());
    assert!(!String::from_utf8_lossy(&res.stderr).is_empty());
}

#[test]
fn unknown_config_key_is_reported() {
    let data = tempfile::tempdir().unwrap();
    fixture(data.path());
    let config = data.path().join("c.json");
    std::fs::write(&config, r#"{"bogus": 1}"#).unwrap();
    let res = run("scan", &["--config", &config.to_string_lossy()], data.path(), data.path());
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("bogus"));
}
