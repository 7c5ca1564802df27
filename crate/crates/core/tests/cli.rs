//! End-to-end checks of the `isac` binary and the result bundle layout.

use isac_core::harness::{run_experiment, Manifest, Scenario};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::process::Command;

fn isac() -> Command {
    Command::new(env!("CARGO_BIN_EXE_isac"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write(dir.path(), "ok.json", r#"{"seed": 3, "unused": true}"#);
    let out = isac().args(["validate", "--scenario"]).arg(&ok).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unused"));

    let bad = write(dir.path(), "bad.json", r#"{"scene": {"points": [{"range": -1}]}}"#);
    let out = isac().args(["validate", "--scenario"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scene.points[0].range"));

    let broken = write(dir.path(), "broken.json", "{\"seed\": }");
    let out = isac().args(["validate", "--scenario"]).arg(&broken).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let missing = dir.path().join("missing.json");
    let out = isac().args(["validate", "--scenario"]).arg(&missing).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_experiment_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "s.json", "{}");
    let out = isac()
        .args(["run", "--experiment", "nonsense", "--out"])
        .arg(dir.path().join("out"))
        .arg("--scenario")
        .arg(&s)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_thread_cap_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "s.json", "{}");
    let out = isac()
        .env("ISAC_THREADS", "zero")
        .args(["validate", "--scenario"])
        .arg(&s)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_hashed_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "s.json", r#"{"steering": {"snapshots": 512}}"#);
    let out_dir = dir.path().join("out");
    for seed in ["5", "5"] {
        let out = isac()
            .env("ISAC_THREADS", "2")
            .args([
                "run",
                "--experiment",
                "steering-comparison",
                "--seed",
                seed,
                "--scenario",
            ])
            .arg(&s)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let manifest: Manifest =
        serde_json::from_slice(&std::fs::read(out_dir.join("steering-comparison/manifest.json")).unwrap()).unwrap();
    assert!(!manifest.files.is_empty());
    for f in &manifest.files {
        let bytes = std::fs::read(out_dir.join(&f.path)).unwrap();
        assert_eq!(hex::encode(Sha256::digest(&bytes)), f.sha256);
        assert_eq!(bytes.len(), f.bytes);
    }
    let run: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("steering-comparison/run.json")).unwrap()).unwrap();
    assert_eq!(run["seed"], 5);
    assert_eq!(run["threads"], 2);

    // The library produces the same bytes as the binary.
    let mut scenario: Scenario = serde_json::from_str(r#"{"steering": {"snapshots": 512}}"#).unwrap();
    scenario.seed = 5;
    let bundle = run_experiment(&scenario, "steering-comparison").unwrap();
    for a in &bundle.artifacts {
        assert_eq!(
            std::fs::read(out_dir.join("steering-comparison").join(&a.name)).unwrap(),
            a.bytes
        );
    }
}

#[test]
fn seed_changes_outputs() {
    let mut s = Scenario::default();
    s.steering.snapshots = 256;
    let a = run_experiment(&s, "steering-comparison").unwrap();
    s.seed = 2;
    let b = run_experiment(&s, "steering-comparison").unwrap();
    assert_ne!(a, b);
}

#[test]
fn shipped_scenarios_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    for name in ["reference.json", "quick.json"] {
        let out = isac().args(["validate", "--scenario"]).arg(dir.join(name)).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(out.stderr.is_empty(), "{name} has unknown fields");
    }
}
