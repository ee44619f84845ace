use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

struct Run {
    dir: TempDir,
}

impl Run {
    fn new(config: Value) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("run.json"), serde_json::to_string_pretty(&config).unwrap()).unwrap();
        Run { dir }
    }

    fn config(&self) -> PathBuf {
        self.dir.path().join("run.json")
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn exec(&self, cmd: &str, extra: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_dichotomy"))
            .arg(cmd)
            .arg("--config")
            .arg(self.config())
            .arg("--output")
            .arg(self.out())
            .args(extra)
            .output()
            .unwrap()
    }

    fn ok(&self, cmd: &str) -> Value {
        let out = self.exec(cmd, &[]);
        assert!(out.status.success(), "{cmd} failed: {}", String::from_utf8_lossy(&out.stderr));
        self.report(cmd)
    }

    fn report(&self, cmd: &str) -> Value {
        let stem = match cmd {
            "explore-uniformity" => "uniformity",
            "conjecture-search" => "conjecture",
            s => s,
        };
        read_json(&self.out().join(format!("{stem}.json")))
    }
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn status(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn f(v: &Value) -> f64 {
    match v {
        Value::String(s) if s == "inf" => f64::INFINITY,
        Value::String(s) if s == "-inf" => f64::NEG_INFINITY,
        v => v.as_f64().unwrap(),
    }
}

fn diagonal(extra: Value) -> Value {
    let mut base = json!({
        "system": { "kind": "diagonal", "rates": [1.0, -1.0] },
        "horizon": 256,
        "seed": 7,
        "budgets": { "outer_starts": 8, "inner_samples": 16, "rounds": 8, "check_samples": 4 }
    });
    base.as_object_mut().unwrap().extend(extra.as_object().unwrap().clone());
    base
}

#[test]
fn identity_spectrum_is_zero() {
    let run = Run::new(json!({
        "system": { "kind": "identity", "dim": 2 },
        "horizon": 128,
        "J": "ed",
        "budgets": { "outer_starts": 4, "inner_samples": 8, "rounds": 4 }
    }));
    let r = run.ok("spectrum");
    let intervals = r["intervals"].as_array().unwrap();
    assert_eq!(intervals.len(), 1);
    assert!(f(&intervals[0][0]).abs() < 0.02 && f(&intervals[0][1]).abs() < 0.02);
    assert_eq!(r["version"], 1);
    assert_eq!(r["config_echo"]["system"]["kind"], "identity");
    let plot = std::fs::read_to_string(run.out().join("spectrum_plot.csv")).unwrap();
    assert!(plot.starts_with("gamma,in_spectrum\n"));
    assert!(plot.lines().skip(1).all(|l| l.ends_with(",0") || l.ends_with(",1")));
    assert!(run.out().join("spectrum_traces.csv").exists());
}

#[test]
fn inadmissible_dims_are_a_config_error() {
    let run = Run::new(diagonal(json!({ "J": [[1, 1], [0, 1], [0, 0]] })));
    let out = run.exec("spectrum", &[]);
    assert_eq!(status(&out), 2);
    assert!(!run.out().join("spectrum.json").exists());
}

#[test]
fn unknown_fields_and_named_dims() {
    let run = Run::new(diagonal(json!({ "J": "xd" })));
    assert_eq!(status(&run.exec("spectrum", &[])), 2);
    let run = Run::new(diagonal(json!({ "bogus": 1 })));
    assert_eq!(status(&run.exec("spectrum", &[])), 2);
}

#[test]
fn missing_files_are_io_errors() {
    let run = Run::new(json!({ "system": { "kind": "file", "path": "nowhere.json" } }));
    assert_eq!(status(&run.exec("spectrum", &[])), 4);
    let out = Command::new(env!("CARGO_BIN_EXE_dichotomy"))
        .args(["spectrum", "--config", "/nonexistent/run.json"])
        .output()
        .unwrap();
    assert_eq!(status(&out), 4);
}

#[test]
fn exponents_of_identity_line() {
    let run = Run::new(json!({
        "system": { "kind": "identity", "dim": 2 },
        "horizon": 64,
        "exponents": { "subspace": [[1.0, 0.0]] }
    }));
    let r = run.ok("exponents");
    assert!(f(&r["lower"]["value"]).abs() < 1e-12);
    assert!(f(&r["upper"]["value"]).abs() < 1e-12);
    assert_eq!(r["lower"]["converged"], true);
}

#[test]
fn exponents_of_diagonal_plane() {
    let run = Run::new(diagonal(json!({ "exponents": { "subspace": [[1.0, 0.0], [0.0, 1.0]] } })));
    let r = run.ok("exponents");
    assert!((f(&r["lower"]["value"]) + 1.0).abs() < 1e-9);
    assert!((f(&r["upper"]["value"]) - 1.0).abs() < 1e-9);
    let table = std::fs::read_to_string(run.out().join("exponents_traces.csv")).unwrap();
    let last = table.lines().last().unwrap();
    let cols: Vec<f64> = last.split(',').map(|c| c.parse().unwrap()).collect();
    assert!((cols[1] + 1.0).abs() < 1e-9 && (cols[2] - 1.0).abs() < 1e-9);
}

#[test]
fn degenerate_subspace_rows_are_config_errors() {
    let run = Run::new(diagonal(json!({ "exponents": { "subspace": [[1.0, 2.0], [2.0, 4.0]] } })));
    assert_eq!(status(&run.exec("exponents", &[])), 2);
}

#[test]
fn check_holds_inside_gap_and_fails_on_spectrum() {
    let run = Run::new(diagonal(json!({ "check": { "gamma": 0.0, "l1": [[0.0, 1.0]], "dims": [1, 1] } })));
    let out = run.exec("check", &[]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("Holds"), "{stdout}");
    let r = run.report("check");
    assert_eq!(r["verdict"], "Holds");
    assert!(f(&r["alpha"]) > 0.5);
    assert!(f(&r["c1_max"]) < 1.0 + 1e-9);

    let run = Run::new(diagonal(json!({ "check": { "gamma": 1.0, "l1": [[0.0, 1.0]], "dims": [1, 1] } })));
    let out = run.exec("check", &[]);
    assert!(out.status.success());
    let verdict = run.report("check")["verdict"].as_str().unwrap().to_string();
    assert!(verdict.starts_with("Fails"), "{verdict}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("Fails"));
}

#[test]
fn check_rejects_non_splittings() {
    let run = Run::new(diagonal(json!({
        "check": { "gamma": 0.0, "l1": [[0.0, 1.0]], "l2": [[0.0, 2.0]], "dims": [1, 1] }
    })));
    assert_eq!(status(&run.exec("check", &[])), 2);
    let run = Run::new(diagonal(json!({})));
    assert_eq!(status(&run.exec("check", &[])), 2);
}

#[test]
fn diagonal_conjecture_family_has_no_findings() {
    let run = Run::new(json!({
        "system": { "kind": "identity", "dim": 1 },
        "horizon": 96,
        "seed": 2,
        "budgets": { "check_samples": 4 },
        "conjecture": { "families": ["diagonal"], "dims": [2, 3], "systems": 2, "complements": 2, "rate": 0.5 }
    }));
    let r = run.ok("conjecture-search");
    assert_eq!(r["findings"].as_array().unwrap().len(), 0);
    assert!(r["systems_checked"].as_u64().unwrap() > 0);
    let findings = read_json(&run.out().join("findings.json"));
    assert_eq!(findings.as_array().unwrap().len(), 0);
    let csv = std::fs::read_to_string(run.out().join("findings.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn zero_budgets_are_config_errors() {
    let run = Run::new(json!({
        "system": { "kind": "identity", "dim": 1 },
        "conjecture": { "families": ["diagonal"], "dims": [2], "systems": 0, "complements": 2, "rate": 0.5 }
    }));
    assert_eq!(status(&run.exec("conjecture-search", &[])), 2);
    let run = Run::new(diagonal(json!({ "budgets": { "inner_samples": 0 } })));
    assert_eq!(status(&run.exec("spectrum", &[])), 2);
}

#[test]
fn uniformity_on_a_line_agrees_across_complements() {
    let run = Run::new(json!({
        "system": { "kind": "diagonal", "rates": [-1.0, 0.5, 1.0] },
        "domain": "one-sided",
        "horizon": 128,
        "seed": 4,
        "budgets": { "check_samples": 4 },
        "uniformity": {
            "l1": [[1.0, 0.0, 0.0]],
            "complements": [[[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]],
            "random_complements": 2
        }
    }));
    let r = run.ok("explore-uniformity");
    assert_eq!(r["maximal"]["u1"], 1);
    assert_eq!(r["maximal"]["u2"], 2);
    let ind = &r["independence"];
    assert_eq!(ind["u1_consistent"], true);
    assert_eq!(ind["findings"].as_array().unwrap().len(), 0);
    for c in ind["complements"].as_array().unwrap() {
        assert_eq!(c["dims"], json!([1, 2]));
    }
}

#[test]
fn format_and_seed_flags() {
    let run = Run::new(json!({
        "system": { "kind": "random", "dim": 2, "scale": 0.3 },
        "horizon": 64,
        "budgets": { "outer_starts": 4, "inner_samples": 8, "rounds": 4 }
    }));
    assert!(run.exec("spectrum", &["--format", "csv"]).status.success());
    assert!(!run.out().join("spectrum.json").exists());
    assert!(run.out().join("spectrum_plot.csv").exists());
    assert!(run.exec("spectrum", &["--format", "json", "--seed", "99", "--threads", "1"]).status.success());
    assert_eq!(run.report("spectrum")["config_echo"]["seed"], 99);
}

fn without_timestamp(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.contains("\"timestamp\""))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn reruns_are_byte_identical() {
    let run = Run::new(json!({
        "system": { "kind": "split-random", "dim": 3, "k": 1, "rate": 0.5 },
        "domain": "one-sided",
        "horizon": 128,
        "seed": 13,
        "budgets": { "outer_starts": 6, "inner_samples": 12, "rounds": 6 }
    }));
    let first = run.ok("spectrum");
    let saved: Vec<(PathBuf, String)> = std::fs::read_dir(run.out())
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.clone(), without_timestamp(&p)))
        .collect();
    let second = run.ok("spectrum");
    assert_eq!(first["intervals"], second["intervals"]);
    for (p, text) in saved {
        assert_eq!(text, without_timestamp(&p), "{} differs", p.display());
    }
}
