//! The `shaplit` binary: exit codes, config resolution and report contents.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BOOLEAN_P: &str = r#"{"kind":"boolean_truth","k":2,"n":5}"#;
const BOOLEAN_S: &str = r#"{"kind":"boolean","k":2,"n":5}"#;
const CONSTANT_P: &str = r#"{"kind":"constant","dim":3,"value":0.4}"#;
const GAUSSIAN_S: &str =
    r#"{"kind":"gaussian","mean":[0,0,0],"covariance":[[1,0,0],[0,1,0],[0,0,1]]}"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shaplit"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn report(dir: &Path, args: &[&str]) -> Value {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn help_lists_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["explain", "--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for flag in ["--k", "--m", "--alpha", "--rule", "--workers", "--seed"] {
        assert!(text.contains(flag), "{flag} missing");
    }
    assert!(text.contains("[default: 1000]"));
    assert!(text.contains("[default: 0.05]"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&run(d, &["bogus"])), 2);
    assert_eq!(code(&run(d, &["--workers", "0", "shapley"])), 2);
    // missing seed is a config error and names the key
    let out = run(
        d,
        &[
            "shapley",
            "--predictor",
            CONSTANT_P,
            "--sampler",
            GAUSSIAN_S,
            "--x",
            "1,2,3",
        ],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("`seed`"));
    let data = run(
        d,
        &[
            "--seed",
            "1",
            "shapley",
            "--predictor",
            CONSTANT_P,
            "--sampler",
            GAUSSIAN_S,
            "--data",
            "nope.csv",
        ],
    );
    assert_eq!(code(&data), 3);
    let dims = run(
        d,
        &[
            "--seed",
            "1",
            "shapley",
            "--predictor",
            CONSTANT_P,
            "--sampler",
            GAUSSIAN_S,
            "--x",
            "1,2",
        ],
    );
    assert_eq!(code(&dims), 3);
    let external = r#"{"kind":"external","command":"false","dim":3}"#;
    let failed = run(
        d,
        &[
            "--seed",
            "1",
            "shapley",
            "--predictor",
            external,
            "--sampler",
            GAUSSIAN_S,
            "--x",
            "1,2,3",
        ],
    );
    assert_eq!(code(&failed), 4);
}

#[test]
fn shapley_on_the_boolean_rule() {
    let dir = tempfile::tempdir().unwrap();
    let r = report(
        dir.path(),
        &[
            "--seed",
            "1",
            "shapley",
            "--predictor",
            BOOLEAN_P,
            "--sampler",
            BOOLEAN_S,
            "--x=4.5,0,0,0,0,0,0,-5,0,0",
            "--draws",
            "2000",
        ],
    );
    let features = r["payload"]["data"]["features"].as_array().unwrap();
    let phi: Vec<f64> = features
        .iter()
        .map(|f| f["phi"].as_f64().unwrap())
        .collect();
    assert!((phi[0] - 0.5).abs() < 0.05, "{phi:?}");
    assert!((phi[7] - 0.5).abs() < 0.05, "{phi:?}");
    assert!(phi
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != 0 && *j != 7)
        .all(|(_, p)| p.abs() < 0.05));
    assert_eq!(r["payload"]["data"]["axioms"]["additivity_pass"], true);
}

#[test]
fn constant_model_has_no_credit_and_no_rejections() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = report(
        d,
        &[
            "--seed",
            "1",
            "shapley",
            "--predictor",
            CONSTANT_P,
            "--sampler",
            GAUSSIAN_S,
            "--x",
            "1,-2,3",
        ],
    );
    for f in s["payload"]["data"]["features"].as_array().unwrap() {
        assert_eq!(f["phi"].as_f64(), Some(0.0));
    }
    let t = report(
        d,
        &[
            "--seed",
            "1",
            "shaplit",
            "--predictor",
            CONSTANT_P,
            "--sampler",
            GAUSSIAN_S,
            "--x",
            "1,-2,3",
            "--feature",
            "0",
            "--k",
            "9",
        ],
    );
    let tests = t["payload"]["data"].as_array().unwrap();
    assert_eq!(tests.len(), 4);
    assert!(tests
        .iter()
        .all(|t| t["outcome"]["p_hat"].as_f64() == Some(1.0)));
}

fn set_report(path: &Path, phi: f64, p: f64) {
    let mut doc: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let feature = &mut doc["payload"]["data"][0];
    feature["phi"] = phi.into();
    for r in feature["records"].as_array_mut().unwrap() {
        r["p"] = p.into();
    }
    std::fs::write(path, serde_json::to_string(&doc).unwrap()).unwrap();
}

#[test]
fn global_rejects_only_at_full_credit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = run(
        d,
        &[
            "--seed",
            "4",
            "--out",
            "explain.json",
            "explain",
            "--predictor",
            BOOLEAN_P,
            "--sampler",
            BOOLEAN_S,
            "--x=4.5,0,0,0,0,0,0,-5,0,0",
            "--features",
            "0",
            "--k",
            "19",
            "--m",
            "19",
        ],
    );
    assert!(out.status.success() && out.stdout.is_empty());
    let global = |phi: f64, p: f64| {
        set_report(&d.join("explain.json"), phi, p);
        let r = report(d, &["global", "--report", "explain.json"]);
        r["payload"]["data"]["tests"][0]["reject"]
            .as_bool()
            .unwrap()
    };
    assert!(global(1.0, 0.0));
    assert!(!global(0.5, 0.5));
}

#[test]
fn experiment_writes_its_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("cfg.json"),
        r#"{"seed": 5, "samples": 2, "tests_k": 50, "gamma_draws": 50}"#,
    )
    .unwrap();
    let out = run(
        d,
        &[
            "experiment",
            "boolean",
            "--config",
            "cfg.json",
            "--out-dir",
            "out",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in ["report.json", "ecdf.csv", "config.snapshot.json"] {
        assert!(d.join("out").join(name).is_file(), "{name}");
    }
    std::fs::write(d.join("bad.json"), r#"{"samples": 2}"#).unwrap();
    let missing = run(
        d,
        &[
            "experiment",
            "boolean",
            "--config",
            "bad.json",
            "--out-dir",
            "bad",
        ],
    );
    assert_eq!(code(&missing), 2);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("`seed`"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = format!(
        r#"{{"seed": 3, "predictor": {CONSTANT_P}, "sampler": {GAUSSIAN_S}, "x": [1, 2, 3], "draws": 10}}"#
    );
    std::fs::write(d.join("cfg.json"), cfg).unwrap();
    let from_file = report(d, &["--config", "cfg.json", "shapley"]);
    assert_eq!(from_file["invocation"]["config"]["draws"], 10);
    assert_eq!(from_file["invocation"]["seed"], 3);
    let overridden = report(
        d,
        &[
            "--config", "cfg.json", "--seed", "8", "shapley", "--draws", "20",
        ],
    );
    assert_eq!(overridden["invocation"]["config"]["draws"], 20);
    assert_eq!(overridden["invocation"]["seed"], 8);
    assert_eq!(
        overridden["invocation"]["config"]["x"],
        serde_json::json!([1.0, 2.0, 3.0])
    );
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.json"), r#"{"seed": 1, "drawz": 3}"#).unwrap();
    let out = run(
        d,
        &[
            "--config",
            "cfg.json",
            "shapley",
            "--predictor",
            CONSTANT_P,
            "--sampler",
            GAUSSIAN_S,
            "--x",
            "1,2,3",
        ],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("drawz"));
}
