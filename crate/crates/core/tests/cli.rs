use std::fs;
use std::io::Read;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn smearing(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smearing"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn summary(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text
        .lines()
        .last()
        .unwrap_or_else(|| panic!("no stdout; stderr: {}", String::from_utf8_lossy(&out.stderr)));
    serde_json::from_str(line).expect("summary is one JSON line")
}

fn manifest(dir: &Path, command: &str) -> Value {
    let text = fs::read_to_string(dir.join(format!("{command}.manifest.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn check_family_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("gamma.json"), r#"{"family":"gamma","b":1,"c":2}"#).unwrap();
    fs::write(d.join("square.json"), r#"{"family":"custom","F":"x^2"}"#).unwrap();
    fs::write(d.join("broken.json"), r#"{"family":"gamma","b":"#).unwrap();

    let ok = smearing(&["check-family", "gamma.json", "--out", "a"], d);
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(summary(&ok)["rows"], 125);
    let csv = fs::read_to_string(d.join("a/residuals.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("xi,t,alpha,residual"));
    assert_eq!(csv.lines().count(), 126);

    let bad = smearing(&["check-family", "square.json", "--out", "b"], d);
    assert_eq!(bad.status.code(), Some(1));
    assert_eq!(summary(&bad)["pass"], false);

    let broken = smearing(&["check-family", "broken.json", "--out", "c"], d);
    assert_eq!(broken.status.code(), Some(2));
    let missing = smearing(&["check-family", "nope.json", "--out", "c"], d);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn km_reports_unit_coefficient() {
    let dir = tempfile::tempdir().unwrap();
    let out = smearing(&["km", "--b", "1", "--c", "2", "--v", "1", "--t", "1"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let s = summary(&out);
    for row in s["results"].as_array().unwrap() {
        assert_eq!(row["analytic"], 1.0);
        assert!((row["estimate"].as_f64().unwrap() - 1.0).abs() < 0.01);
    }
    let csv = fs::read_to_string(dir.path().join("out/km.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("n,v,t,estimate,analytic,rel_error"));
}

#[test]
fn heston_simulation_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let common = ["simulate", "--model", "heston", "--seed", "42", "--n-paths", "2000"];
    let a = smearing(&[&common[..], &["--threads", "1", "--out", "a"]].concat(), d);
    let b = smearing(&[&common[..], &["--threads", "4", "--out", "b"]].concat(), d);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    let (ma, mb) = (manifest(&d.join("a"), "simulate"), manifest(&d.join("b"), "simulate"));
    assert_eq!(ma["outputs"], mb["outputs"]);
    assert_eq!(ma["seed"], 42);
    assert_eq!(
        fs::read(d.join("a/ensemble.csv")).unwrap(),
        fs::read(d.join("b/ensemble.csv")).unwrap()
    );
}

#[test]
fn gzip_ensemble_decodes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = smearing(&["simulate", "--n-paths", "10", "--gzip", "--record-stride", "50"], d);
    assert_eq!(out.status.code(), Some(0));
    let mut text = String::new();
    flate2::read::GzDecoder::new(fs::File::open(d.join("out/ensemble.csv.gz")).unwrap())
        .read_to_string(&mut text)
        .unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("path_id,time,x,v"));
    // 100 steps recorded at 0, 50, 100
    assert_eq!(lines.count(), 10 * 3);
}

#[test]
fn price_agrees_at_the_money() {
    let dir = tempfile::tempdir().unwrap();
    let out = smearing(&["price", "--strike", "1", "--spot", "1", "--T", "1"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let s = summary(&out);
    assert_eq!(s["agree"], true);
    let file: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/price.json")).unwrap()).unwrap();
    for key in ["strike", "maturity", "fourier_price", "mc_price", "mc_stderr", "agree"] {
        assert!(file.get(key).is_some(), "{key}");
    }
}

#[test]
fn invert_csv_and_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = smearing(&["invert", "--v", "1"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("out/invert.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("v,k,approximant,exact_if_known,abs_error"));
    assert_eq!(csv.lines().count(), 5);
    let r = &summary(&out)["results"][0];
    assert!((r["value"].as_f64().unwrap() - (-1f64).exp()).abs() < 1e-3);
}

#[test]
fn cke_passes_and_memory_control_fails() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ok = smearing(&["cke", "--r", "0.05", "--out", "a"], d);
    assert_eq!(ok.status.code(), Some(0));
    let bad = smearing(
        &[
            "cke",
            "--form",
            "time-independent",
            "--tc",
            "0.5",
            "--tb",
            "1",
            "--out",
            "b",
        ],
        d,
    );
    assert_eq!(bad.status.code(), Some(1));
    assert!(summary(&bad)["l1_residual"].as_f64().unwrap() > 1e-2);
    let head = fs::read_to_string(d.join("a/cke_char.csv")).unwrap();
    assert_eq!(head.lines().next(), Some("p,re,im"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("cfg.json"), r#"{"b": 2, "c": 4, "v": [5.0], "seed": 9}"#).unwrap();
    let out = smearing(&["km", "--config", "cfg.json", "--v", "2", "--n", "1"], d);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&d.join("out"), "km");
    assert_eq!(m["config"]["b"], 2.0);
    assert_eq!(m["config"]["v"], serde_json::json!([2.0]));
    assert_eq!(m["seed"], 9);

    fs::write(d.join("typo.json"), r#"{"bb": 2}"#).unwrap();
    let out = smearing(&["km", "--config", "typo.json"], d);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn replay_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let first = smearing(&["simulate", "--seed", "7", "--n-paths", "500", "--antithetic"], d);
    assert_eq!(first.status.code(), Some(0));
    let again = smearing(&["replay", "out/simulate.manifest.json", "--out", "again"], d);
    assert_eq!(
        again.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&again.stderr)
    );
    assert_eq!(
        fs::read(d.join("out/ensemble.csv")).unwrap(),
        fs::read(d.join("again/ensemble.csv")).unwrap()
    );
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(smearing(&["km", "--bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(
        smearing(&["price", "--strike", "-1"], dir.path()).status.code(),
        Some(2)
    );
    assert_eq!(smearing(&[], dir.path()).status.code(), Some(2));
}

#[test]
fn help_shows_defaults() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["check-family", "invert", "cke", "km", "simulate", "price"] {
        let out = smearing(&[cmd, "--help"], dir.path());
        assert_eq!(out.status.code(), Some(0));
        let help = String::from_utf8(out.stdout).unwrap();
        assert!(help.contains("--tol"), "{cmd}");
        for name in ["--tol", "--seed", "--threads"] {
            let block: String = help
                .split("\n  ")
                .filter(|b| b.trim_start().starts_with(name))
                .collect();
            assert!(block.contains("[default:"), "{cmd} {name}: {block}");
        }
    }
}
