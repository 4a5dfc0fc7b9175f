//! Exit-code contract: 0 success, 1 validation, 2 runtime.

use std::fs;
use std::process::Command;

fn repmotion(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_repmotion"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn missing_box_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("t.jsonl");
    fs::write(&traj, "").unwrap();
    let out = repmotion(&[
        "run",
        "--input", traj.to_str().unwrap(),
        "--boxes", dir.path().join("missing.json").to_str().unwrap(),
        "--models", dir.path().join("missing-bundle.json").to_str().unwrap(),
        "--out", dir.path().join("report.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("missing.json"), "stderr: {stderr}");
}

#[test]
fn unknown_preset_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = repmotion(&[
        "synth",
        "--preset", "nonsense",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn overlapping_boxes_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("t.jsonl");
    fs::write(&traj, "").unwrap();
    let boxes = dir.path().join("boxes.json");
    fs::write(
        &boxes,
        r#"{"boxes": [
            {"id": 1, "x_min": 0.0, "y_min": 0.0, "x_max": 10.0, "y_max": 10.0},
            {"id": 2, "x_min": 5.0, "y_min": 5.0, "x_max": 15.0, "y_max": 15.0}
        ]}"#,
    )
    .unwrap();
    let bundle = dir.path().join("bundle.json");
    fs::write(&bundle, "{}").unwrap();
    let out = repmotion(&[
        "run",
        "--input", traj.to_str().unwrap(),
        "--boxes", boxes.to_str().unwrap(),
        "--models", bundle.to_str().unwrap(),
        "--out", dir.path().join("report.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("overlap"));
}

#[test]
fn evaluate_rejects_ground_truth_with_unknown_ids() {
    let dir = tempfile::tempdir().unwrap();

    // Build a minimal real report through synth + train + run.
    let corpus = dir.path().join("corpus");
    let scene = dir.path().join("scene");
    assert!(repmotion(&[
        "synth", "--preset", "training",
        "--out", corpus.to_str().unwrap(),
        "--seed", "5", "--count", "12",
    ])
    .status
    .success());
    assert!(repmotion(&[
        "synth", "--preset", "scene",
        "--out", scene.to_str().unwrap(),
        "--seed", "5",
    ])
    .status
    .success());
    let bundle = dir.path().join("bundle.json");
    assert!(repmotion(&[
        "train",
        "--trajectories", corpus.join("trajectories.jsonl").to_str().unwrap(),
        "--truth", corpus.join("truth.jsonl").to_str().unwrap(),
        "--out", bundle.to_str().unwrap(),
        "--seed", "5",
    ])
    .status
    .success());
    let report = dir.path().join("report.json");
    assert!(repmotion(&[
        "run",
        "--input", scene.join("trajectories.jsonl").to_str().unwrap(),
        "--boxes", scene.join("boxes.json").to_str().unwrap(),
        "--models", bundle.to_str().unwrap(),
        "--out", report.to_str().unwrap(),
        "--seed", "5",
    ])
    .status
    .success());

    let bad_truth = dir.path().join("bad_truth.jsonl");
    fs::write(
        &bad_truth,
        r#"{"id": "no-such-trajectory", "class": "circle", "start_frame": 0, "end_frame": 100, "reps": 4.0}"#,
    )
    .unwrap();
    let out = repmotion(&[
        "evaluate",
        "--report", report.to_str().unwrap(),
        "--truth", bad_truth.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-trajectory"));
}

#[test]
fn stale_bundle_version_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    assert!(repmotion(&[
        "synth", "--preset", "training",
        "--out", corpus.to_str().unwrap(),
        "--seed", "6", "--count", "12",
    ])
    .status
    .success());
    let bundle = dir.path().join("bundle.json");
    assert!(repmotion(&[
        "train",
        "--trajectories", corpus.join("trajectories.jsonl").to_str().unwrap(),
        "--truth", corpus.join("truth.jsonl").to_str().unwrap(),
        "--out", bundle.to_str().unwrap(),
        "--seed", "6",
    ])
    .status
    .success());

    // Corrupt the version field.
    let text = fs::read_to_string(&bundle).unwrap();
    fs::write(&bundle, text.replace("\"bundle_version\": 1", "\"bundle_version\": 99")).unwrap();

    let scene = dir.path().join("scene");
    assert!(repmotion(&[
        "synth", "--preset", "scene",
        "--out", scene.to_str().unwrap(),
        "--seed", "6",
    ])
    .status
    .success());
    let out = repmotion(&[
        "run",
        "--input", scene.join("trajectories.jsonl").to_str().unwrap(),
        "--boxes", scene.join("boxes.json").to_str().unwrap(),
        "--models", bundle.to_str().unwrap(),
        "--out", dir.path().join("report.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("version"));
}

#[test]
fn config_file_overrides_defaults_and_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"seed": 123}"#).unwrap();

    // Config seed applies.
    let out_a = dir.path().join("a");
    assert!(repmotion(&[
        "synth", "--preset", "training",
        "--out", out_a.to_str().unwrap(),
        "--config", config.to_str().unwrap(),
        "--count", "3",
    ])
    .status
    .success());
    let out_b = dir.path().join("b");
    assert!(repmotion(&[
        "synth", "--preset", "training",
        "--out", out_b.to_str().unwrap(),
        "--seed", "123",
        "--count", "3",
    ])
    .status
    .success());
    let a = fs::read(out_a.join("trajectories.jsonl")).unwrap();
    let b = fs::read(out_b.join("trajectories.jsonl")).unwrap();
    assert_eq!(a, b, "config seed and flag seed should generate identically");

    // Flag overrides config.
    let out_c = dir.path().join("c");
    assert!(repmotion(&[
        "synth", "--preset", "training",
        "--out", out_c.to_str().unwrap(),
        "--config", config.to_str().unwrap(),
        "--seed", "456",
        "--count", "3",
    ])
    .status
    .success());
    let c = fs::read(out_c.join("trajectories.jsonl")).unwrap();
    assert_ne!(a, c, "flag seed must override the config seed");
}

#[test]
fn invalid_config_file_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"detector": {"vote_k": 4}}"#).unwrap();
    let out = repmotion(&[
        "synth", "--preset", "training",
        "--out", dir.path().join("x").to_str().unwrap(),
        "--config", config.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("vote_k"));
}
