use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn egopose(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_egopose")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = egopose(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Runs the whole pipeline in `dir` and returns the files whose bytes must
/// be reproducible.
fn pipeline(dir: &Path) -> Vec<std::path::PathBuf> {
    let config = dir.join("config.json");
    fs::write(&config, r#"{"k": 12, "trees": 10}"#).unwrap();
    for (name, seed) in [("a", "11"), ("b", "12"), ("test", "13")] {
        ok(&["synth", "--random-frames", "300", "--seed", seed, "--out-dir", s(&dir.join(name))]);
    }
    let model = dir.join("model.json");
    let out = ok(&[
        "cluster",
        "--poses",
        s(&dir.join("a/poses.jsonl")),
        s(&dir.join("b/poses.jsonl")),
        "--seed",
        "3",
        "--out",
        s(&model),
        "--config",
        s(&config),
    ]);
    assert!(out.contains("k-means objective"));
    let bank = dir.join("bank.json");
    let forest = dir.join("forest.json");
    let out = ok(&[
        "train",
        "--features",
        s(&dir.join("a/correspondences.jsonl")),
        s(&dir.join("b/homographies.jsonl")),
        "--bank",
        s(&bank),
        "--classifier",
        "forest",
        "--out",
        s(&forest),
        "--config",
        s(&config),
    ]);
    assert!(out.contains("out-of-bag accuracy"));
    let path = dir.join("path.jsonl");
    let out = ok(&[
        "infer",
        "--input",
        s(&dir.join("test/correspondences.jsonl")),
        "--bank",
        s(&bank),
        "--cluster-model",
        s(&model),
        "--classifier-model",
        s(&forest),
        "--static-h",
        s(&dir.join("test/static_h.jsonl")),
        "--solver",
        "paper",
        "--out",
        s(&path),
        "--config",
        s(&config),
    ]);
    assert!(out.contains("energy") && out.contains("ms/frame"));
    let report = dir.join("report.json");
    let out = ok(&[
        "eval",
        "--pred",
        s(&dir.join("path.poses.jsonl")),
        "--gt",
        s(&dir.join("test/poses.jsonl")),
        "--out",
        s(&report),
    ]);
    assert!(out.contains("Avg"));
    vec![
        dir.join("test/poses.jsonl"),
        dir.join("test/correspondences.jsonl"),
        model,
        bank,
        dir.join("bank_poses.jsonl"),
        forest,
        path,
        dir.join("path.poses.jsonl"),
        dir.join("path.energy.json"),
        report,
    ]
}

#[test]
fn full_pipeline_is_reproducible() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let a = pipeline(first.path());
    let b = pipeline(second.path());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{} differs between runs", x.display());
    }
    let report: serde_json::Value = serde_json::from_slice(&fs::read(&a[9]).unwrap()).unwrap();
    assert!(report["overall_mean_cm"].as_f64().unwrap() > 0.0);
    let frames = fs::read_to_string(&a[6]).unwrap().lines().count();
    assert_eq!(frames, report["frames"].as_u64().unwrap() as usize);
}

#[test]
fn constant_baseline_needs_no_classifier() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--random-frames", "200", "--seed", "4", "--out-dir", s(&d.join("train"))]);
    ok(&["cluster", "--poses", s(&d.join("train/poses.jsonl")), "--k", "6", "--out", s(&d.join("model.json"))]);
    let out = ok(&[
        "infer",
        "--input",
        s(&d.join("train/homographies.jsonl")),
        "--bank",
        s(&d.join("bank.json")),
        "--cluster-model",
        s(&d.join("model.json")),
        "--solver",
        "always-standing",
        "--out",
        s(&d.join("path.jsonl")),
    ]);
    assert!(out.contains("always-standing"));
    let poses = fs::read_to_string(d.join("path.poses.jsonl")).unwrap();
    let lines: Vec<&str> = poses.lines().collect();
    assert_eq!(lines.len(), fs::read_to_string(d.join("train/static_h.jsonl")).unwrap().lines().count());
    // Every frame carries the same pose.
    let joints = |l: &str| serde_json::from_str::<serde_json::Value>(l).unwrap()["joints"].clone();
    assert!(lines.iter().all(|l| joints(l) == joints(lines[0])));

    let out = egopose(&[
        "infer",
        "--input",
        s(&d.join("train/homographies.jsonl")),
        "--bank",
        s(&d.join("bank.json")),
        "--cluster-model",
        s(&d.join("model.json")),
        "--solver",
        "paper",
        "--out",
        s(&d.join("path.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn errors_are_json_with_exit_codes() {
    let out = egopose(&["infer", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["code"], "Usage");

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.jsonl");
    let out = egopose(&["eval", "--pred", s(&missing), "--gt", s(&missing), "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(out.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["code"], "Io");
    assert!(err["message"].as_str().unwrap().contains("missing.jsonl"));

    // Zero-length segments are rejected before generation.
    let script = dir.path().join("script.json");
    fs::write(&script, r#"{"segments": [{"primitive": "stand_idle", "frames": 0}]}"#).unwrap();
    let out = egopose(&["synth", "--script", s(&script), "--out-dir", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["code"], "ScriptError");
}
