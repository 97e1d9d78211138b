use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn heatlab(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_heatlab"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        sub,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    heatlab(&args, &[])
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn verdict(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("verdict.json")).unwrap()).unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

#[test]
fn free_space_probe_has_zero_gap() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run(
        "kernel-probe",
        &configs().join("kernel-probe.json"),
        &out,
        &[],
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let v = verdict(&out);
    assert_eq!(v["pass"], Value::Bool(true));
    assert_eq!(v["anchor"], "off_diagonal_decay");
    assert_eq!(v["details"]["gap"].as_f64(), Some(0.0));
    assert!(out.join("results.csv").exists() && out.join("config-echo.json").exists());
}

#[test]
fn damped_lacunary_is_vanishing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run("vanishing", &configs().join("vanishing.json"), &out, &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(verdict(&out)["details"]["classification"], "vanishing");
}

#[test]
fn every_sample_config_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let mut seen = 0;
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let sub = path.file_stem().unwrap().to_str().unwrap().to_string();
        let out = tmp.path().join(&sub);
        let o = run(&sub, &path, &out, &[]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{sub}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        let v = verdict(&out);
        assert_eq!(v["subcommand"], sub.as_str());
        assert!(!v["anchor"].as_str().unwrap().is_empty());
        seen += 1;
    }
    assert_eq!(seen, 9);
}

#[test]
fn malformed_configs_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cases = [
        ("broken.json", "{\"domain\": "),
        (
            "unknown_key.json",
            r#"{"domain": {"kind": "free", "dim": 1}, "colour": 3, "experiment": {"x": [0.0], "y": [1.0]}}"#,
        ),
        (
            "missing_field.json",
            r#"{"domain": {"kind": "free", "dim": 1}, "experiment": {"x": [0.0]}}"#,
        ),
        (
            "bad_domain.json",
            r#"{"domain": {"kind": "torus", "lengths": [1.0]}, "experiment": {"x": [0.0], "y": [0.5]}}"#,
        ),
    ];
    for (name, body) in cases {
        let p = write_config(tmp.path(), name, body);
        let o = run("kernel-probe", &p, &out, &[]);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{name}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let o = run("kernel-probe", &tmp.path().join("absent.json"), &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = heatlab(&["kernel-probe"], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn contract_failure_exits_1_and_names_the_check() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    // A zero tolerance on an interval, where the fit has a small image correction.
    let p = write_config(
        tmp.path(),
        "strict.json",
        r#"{"domain": {"kind": "interval", "lengths": [1.0]},
            "tolerances": {"probe_gap": 0.0},
            "experiment": {"x": [0.3], "y": [0.6]}}"#,
    );
    let o = run("kernel-probe", &p, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("contract failed: gap"));
    let v = verdict(&out);
    assert_eq!(v["pass"], Value::Bool(false));
    assert_eq!(v["failures"][0], "gap");
}

#[test]
fn runs_are_deterministic_and_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write_config(
        tmp.path(),
        "flux.json",
        r#"{"domain": {"kind": "channel", "lengths": [6.283185307179586, 1.0]},
            "grid": [256, 129], "budgets": {"depth": 3},
            "experiment": {"alphas": [0.5], "s_list": [0.25, 0.0625, 0.015625, 0.00390625, 0.0009765625, 0.000244140625]},
            "tolerances": {"slope": 10.0}}"#,
    );
    let csv = |seed: &str, dir: &str| {
        let out = tmp.path().join(dir);
        let o = run("onsager-flux", &p, &out, &["--seed", seed]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        fs::read(out.join("results.csv")).unwrap()
    };
    let a = csv("3", "a");
    assert_eq!(a, csv("3", "b"));
    assert_ne!(a, csv("4", "c"));
    let echo: Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("c/config-echo.json")).unwrap())
            .unwrap();
    assert_eq!(echo["seed"], 4);
}

#[test]
fn thread_cap_is_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("kernel-probe.json");
    let out = tmp.path().join("out");
    let args = [
        "kernel-probe",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    assert_eq!(
        heatlab(&args, &[("HEATLAB_THREADS", "two")]).status.code(),
        Some(2)
    );
    assert_eq!(
        heatlab(&args, &[("HEATLAB_THREADS", "1")]).status.code(),
        Some(0)
    );
}

#[test]
fn csv_floats_carry_17_digits() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run(
        "kernel-eval",
        &configs().join("kernel-eval.json"),
        &out,
        &[],
    );
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(out.join("results.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,pair,value,swapped"));
    for line in lines {
        let value = line.split(',').nth(2).unwrap();
        let mantissa = value.split('e').next().unwrap().replace(['-', '.'], "");
        assert_eq!(mantissa.len(), 17, "{value}");
    }
}
