use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fourdvar(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fourdvar"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn line_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let text = format!(
        r#"{{
        "grid": {{"dim": 1, "n_cells": 5, "spacing": 1.0, "compositions": ["PM25", "BC"]}},
        "dynamics": {{"kind": "linear_advection_diffusion", "advection": 0.5, "diffusion": 0.1}},
        "observations": {{"count": 3}},
        "cycle": {{"window_length": 2.0, "n_cycles": 3}},
        "world": {{"initial_mean": 1.0}},
        "lab": {{"members": 30}}
        {extra}
    }}"#
    );
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn subcommands_write_their_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = line_config(tmp.path(), "");
    let out = tmp.path().join("out");
    for (args, file) in [
        (vec!["truth"], "truth.csv"),
        (vec!["observe"], "observations.csv"),
        (vec!["assimilate"], "J_trace.csv"),
        (vec!["ensemble"], "moments.csv"),
        (vec!["verify", "--suite", "shift"], "shiftcheck.csv"),
    ] {
        let o = fourdvar(&args, &config, &out);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join(file).exists(), "{file}");
    }
    let head = fs::read_to_string(out.join("analyses.csv")).unwrap();
    assert!(head.starts_with("k,location,composition,x_A\n"));
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert!(meta["rng_algorithm"].as_str().unwrap().starts_with("ChaCha8"));
    assert_eq!(meta["config_sha256"].as_str().unwrap().len(), 64);

    let report = fourdvar(&["report"], &config, &out);
    assert_eq!(report.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&report.stdout).contains("PASS shift k=2"));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let missing = fourdvar(&["truth"], &tmp.path().join("missing.json"), &out);
    assert_eq!(missing.status.code(), Some(2));

    let config = line_config(tmp.path(), r#", "unknown_key": 1"#);
    assert_eq!(fourdvar(&["truth"], &config, &out).status.code(), Some(2));

    // Dissection needs at least 200 members.
    let config = line_config(tmp.path(), "");
    assert_eq!(fourdvar(&["verify", "--suite", "errors"], &config, &out).status.code(), Some(2));

    // Report without prior outputs.
    assert_eq!(fourdvar(&["report"], &config, &tmp.path().join("empty")).status.code(), Some(2));
}

#[test]
fn property_failure_exits_1() {
    // A linear truth leaves the model discrepancy at zero, so its correlations
    // are undefined and the dissection verdicts fail.
    let tmp = tempfile::tempdir().unwrap();
    let config = line_config(tmp.path(), "");
    let out = tmp.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_fourdvar"))
        .args(["verify", "--suite", "errors", "--members", "200", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("correlations.csv").exists());
    assert_eq!(fourdvar(&["report"], &config, &out).status.code(), Some(1));
}

#[test]
fn numeric_failure_exits_3() {
    // An unstable model matrix blows the truth up to infinity.
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"{
        "grid": {"dim": 1, "n_cells": 2, "spacing": 1.0, "compositions": ["PM25"]},
        "dynamics": {"kind": "quadratic_perturbed", "quadratic_gain": 10.0},
        "cycle": {"window_length": 40.0, "n_cycles": 2},
        "world": {"initial_mean": 5.0}
    }"#;
    let config = tmp.path().join("config.json");
    fs::write(&config, text).unwrap();
    let o = fourdvar(&["assimilate"], &config, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn seed_override_changes_outputs_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let config = line_config(tmp.path(), "");
    let run = |seed: &str, dir: &str| {
        let out = tmp.path().join(dir);
        let o = Command::new(env!("CARGO_BIN_EXE_fourdvar"))
            .args(["observe", "--seed", seed, "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(o.status.success());
        fs::read(out.join("observations.csv")).unwrap()
    };
    assert_eq!(run("5", "a"), run("5", "b"));
    assert_ne!(run("5", "a"), run("6", "c"));
}
