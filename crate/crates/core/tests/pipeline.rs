use deepfake_core::config::validate_config;
use deepfake_core::explain::Method;
use deepfake_core::journal::Status;
use deepfake_core::pipeline::{paths, Pipeline, Stage};
use deepfake_core::synthetic::{write_fixture, FixtureSpec};
use serde_json::json;

fn fixture_config(root: &std::path::Path) -> deepfake_core::config::RunConfig {
    let fx = write_fixture(&root.join("videos"), &FixtureSpec::default()).unwrap();
    validate_config(&json!({
        "real_dir": fx.real_dir,
        "fake_dir": fx.fake_dir,
        "out_dir": root.join("out"),
        "max_epochs": 15,
        "window": 3,
        "order": 2,
        "lr0": 0.01,
        "n": 4,
        "seed": 1,
    }))
    .unwrap()
}

#[test]
fn fixture_run_produces_all_artifacts_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path());
    let pipeline = Pipeline::new(cfg.clone()).unwrap();
    let outcomes = pipeline.run().unwrap();
    assert!(outcomes.iter().all(|o| !o.skipped));
    for rel in [paths::MANIFEST, paths::WEIGHTS, paths::CHECKPOINT, paths::REPORT, paths::CONFUSION, paths::HISTORY] {
        assert!(pipeline.artifact(rel).exists(), "{rel} missing");
    }
    let report = pipeline.report().unwrap();
    eprintln!("{report:?}");
    assert!(report.accuracy >= 0.95, "accuracy {}", report.accuracy);
    for m in Method::ALL {
        assert!(!pipeline.heatmaps(m).unwrap().is_empty(), "{m}");
    }

    let again = Pipeline::new(cfg).unwrap().run().unwrap();
    assert!(again.iter().all(|o| o.skipped));
    let entries = pipeline.journal().entries().unwrap();
    assert_eq!(entries.iter().filter(|e| e.status == Status::Skipped).count(), Stage::ALL.len());
}
