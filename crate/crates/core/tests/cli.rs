//! The `cffg run` binary: exit codes, seed resolution and output files.

use std::process::Command;

fn cffg() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cffg"));
    c.env_remove("CFFG_SEED");
    c
}

fn manifest(dir: &std::path::Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn invalid_config_exits_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = cffg()
        .args(["run", "--alpha", "1.5", "--output"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn seed_comes_from_flag_then_environment_then_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "trials = 1\nseed = 5\n").unwrap();
    let run = |env: Option<&str>, flag: Option<&str>| {
        let out_dir = dir.path().join(format!("{env:?}{flag:?}"));
        let mut c = cffg();
        c.args(["run", "--config"])
            .arg(&config)
            .arg("--output")
            .arg(&out_dir);
        if let Some(s) = env {
            c.env("CFFG_SEED", s);
        }
        if let Some(s) = flag {
            c.args(["--seed", s]);
        }
        assert!(c.status().unwrap().success());
        manifest(&out_dir)["seed"].as_u64().unwrap()
    };
    assert_eq!(run(None, None), 5);
    assert_eq!(run(Some("8"), None), 8);
    assert_eq!(run(Some("8"), Some("9")), 9);
}

#[test]
fn single_run_writes_rows_traces_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let status = cffg()
        .args(["run", "--experiment", "single", "--trials", "2", "--output"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let results = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let mut lines = results.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header[0], "experiment");
    assert!(header.contains(&"timing_ms"));
    assert_eq!(lines.count(), 2);
    let m = manifest(dir.path());
    assert_eq!(m["status"], "complete");
    assert_eq!(m["rows"], 2);
    for f in ["gfe_traces.csv", "reinforced_a.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}
