use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
    csv: String,
}

fn carnot(dir: &Path, args: &[&str], config: &str, envs: &[(&str, &str)]) -> Run {
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join("out.csv");
    let _ = std::fs::remove_file(&out);
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_carnot"));
    cmd.args(args).arg("--config").arg(&cfg).arg("--out").arg(&out);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    let Output { status, stdout, stderr } = cmd.output().unwrap();
    Run {
        code: status.code().unwrap(),
        stdout: String::from_utf8(stdout).unwrap(),
        stderr: String::from_utf8(stderr).unwrap(),
        csv: std::fs::read_to_string(&out).unwrap_or_default(),
    }
}

fn summary_value<'a>(stdout: &'a str, key: &str) -> &'a str {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in\n{stdout}"))
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

const MC: &str = r#""factor": { "n_starts": 2, "max_evals": 20, "final_factor": 4, "method": "mc" }"#;

#[test]
fn group_checks() {
    let dir = TempDir::new().unwrap();
    let r = carnot(dir.path(), &["check-group"], r#"{ "group": "heisenberg1" }"#, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.csv.starts_with("check,value,tolerance,passed\n"));
    let r = carnot(dir.path(), &["check-group"], r#"{ "group": "engel" }"#, &[]);
    assert_eq!(r.code, 0);
    // Q = 1·2 + 2·1 + 3·1
    assert_eq!(summary_value(&r.stdout, "homogeneous_dimension"), "7");
    let broken = r#"{ "group": { "step": 2, "layer_dims": [2, 1], "bracket": [[2, 0, 1, 1.0], [0, 0, 1, 1.0]] } }"#;
    let r = carnot(dir.path(), &["check-group"], broken, &[]);
    assert_eq!(r.code, 2);
    assert!(summary_value(&r.stdout, "violations").contains("grading"));
    let bad_shape = r#"{ "group": { "step": 3, "layer_dims": [2, 1], "bracket": [] } }"#;
    assert_eq!(carnot(dir.path(), &["check-group"], bad_shape, &[]).code, 3);
}

#[test]
fn distance_checks() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{ "group": "heisenberg1", "distance": { "family": "dinf", "params": { "c": 10 } } }"#;
    let r = carnot(dir.path(), &["check-distance", "--samples", "20000"], cfg, &[]);
    assert_eq!(r.code, 2);
    assert!(summary_value(&r.stdout, "axioms").starts_with("triangle violated"));
    let triangle = r.csv.lines().find(|l| l.starts_with("triangle,")).unwrap();
    assert!(triangle.contains(",false,"));
    let cfg = r#"{ "group": "abelian:3", "distance": { "family": "euclidean" }, "samples": 20000 }"#;
    assert_eq!(carnot(dir.path(), &["check-distance"], cfg, &[]).code, 0);
    let cfg = r#"{ "group": "heisenberg1", "distance": { "family": "koranyi", "params": { "gamma": 32 } }, "samples": 1000 }"#;
    assert_eq!(carnot(dir.path(), &["check-distance"], cfg, &[]).code, 2);
}

#[test]
fn beta_rows() {
    let dir = TempDir::new().unwrap();
    let cfg = format!(r#"{{ "group": "abelian:3", "distance": {{ "family": "euclidean" }}, "subspace": [[1, 0, 0], [0, 1, 0]], "samples": 20000, {MC} }}"#);
    let r = carnot(dir.path(), &["beta"], &cfg, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (beta, err) = (column(&r.csv, "beta")[0], column(&r.csv, "std_error")[0]);
    assert!((beta - std::f64::consts::PI).abs() <= 3.0 * err, "{beta} ± {err}");
    let cfg = format!(r#"{{ "group": "heisenberg1", "distance": {{ "family": "dinf", "params": {{ "c": 2 }} }}, "subspace": "vertical_plane_x0", "samples": 20000, {MC} }}"#);
    let r = carnot(dir.path(), &["beta"], &cfg, &[]);
    assert_eq!(r.code, 0);
    let (beta, err) = (column(&r.csv, "beta")[0], column(&r.csv, "std_error")[0]);
    assert!((beta - 1.0).abs() <= 3.0 * err, "{beta} ± {err}");
    assert_eq!(r.csv.lines().next().unwrap(), "case_id,signature,beta,std_error,gap,argmax_0,argmax_1,argmax_2,seed,n_mc");
}

#[test]
fn configuration_errors_exit_3() {
    let dir = TempDir::new().unwrap();
    let no_subspace = r#"{ "group": "heisenberg1", "distance": { "family": "dinf" } }"#;
    let r = carnot(dir.path(), &["beta"], no_subspace, &[]);
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("subspace"));
    let unknown = r#"{ "group": "heisenberg1", "colour": "blue" }"#;
    assert_eq!(carnot(dir.path(), &["check-group"], unknown, &[]).code, 3);
    let wrong_param = r#"{ "group": "heisenberg1", "distance": { "family": "dinf", "params": { "gamma": 1 } } }"#;
    assert_eq!(carnot(dir.path(), &["check-distance"], wrong_param, &[]).code, 3);
    assert_eq!(carnot(dir.path(), &["check-group"], "{ not json", &[]).code, 3);
    assert_eq!(carnot(dir.path(), &["check-group", "--frobnicate"], "{}", &[]).code, 3);
    assert_eq!(carnot(dir.path(), &["check-group"], r#"{ "group": "heisenberg1" }"#, &[("CARNOT_THREADS", "zero")]).code, 3);
}

#[test]
fn sweeps() {
    let dir = TempDir::new().unwrap();
    let cfg = format!(r#"{{ "group": "abelian:3", "distance": {{ "family": "euclidean" }}, "sweep": {{ "signature": [2], "k": 4 }}, "samples": 20000, {MC} }}"#);
    let r = carnot(dir.path(), &["sweep"], &cfg, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (betas, errs) = (column(&r.csv, "beta"), column(&r.csv, "std_error"));
    assert_eq!(betas.len(), 4);
    for (b, e) in betas.iter().zip(&errs) {
        assert!((b - std::f64::consts::PI).abs() <= 3.0 * e);
    }
    let cfg = format!(r#"{{ "group": "heisenberg1", "distance": {{ "family": "koranyi" }}, "sweep": {{ "signature": [1, 1], "k": 1 }}, "samples": 10000, {MC} }}"#);
    let r = carnot(dir.path(), &["sweep"], &cfg, &[]);
    assert_eq!(r.code, 0);
    assert_eq!(summary_value(&r.stdout, "spread"), "0.0000000000000000e0");
}

const PLANE: &str = r#""surface": { "kind": "param", "expr": { "x": "0", "y": "u", "t": "v" }, "domain": [[-1, 1], [-1, 1]] }"#;
const NESTED: &str = r#""factor": { "n_starts": 2, "max_evals": 20, "final_factor": 4, "method": "nested_quadrature" }"#;

#[test]
fn blowups() {
    let dir = TempDir::new().unwrap();
    let cfg = format!(
        r#"{{ "group": "heisenberg1", "distance": {{ "family": "dinf", "params": {{ "c": 2 }} }}, {PLANE}, "blowup": {{ "point": [0, 0], "radii": [0.4, 0.2, 0.1] }}, {NESTED} }}"#
    );
    let r = carnot(dir.path(), &["blowup"], &cfg, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.csv.lines().next().unwrap(), "r,ratio,err");
    for ratio in column(&r.csv, "ratio") {
        assert!((ratio - 1.0).abs() < 1e-6);
    }
    let literal = r#"{ "group": "heisenberg1", "distance": { "family": "dinf" },
        "surface": { "kind": "param", "expr": { "x": "u", "y": "v", "t": "(u^2 + v^2) / 4" }, "domain": [[-1, 1], [-1, 1]] },
        "blowup": { "point": [0, 0] } }"#;
    let r = carnot(dir.path(), &["blowup"], literal, &[]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("characteristic"));
    let mixed = r#"{ "group": "heisenberg1", "distance": { "family": "dinf" },
        "surface": { "kind": "levelset", "expr": { "x": "u", "f": "x" }, "domain": [[0, 1], [0, 1]] }, "blowup": { "point": [0, 0] } }"#;
    assert_eq!(carnot(dir.path(), &["blowup"], mixed, &[]).code, 3);
}

#[test]
fn graph_areas() {
    let dir = TempDir::new().unwrap();
    for f in ["x", "x - 0.3"] {
        let cfg = format!(
            r#"{{ "group": "heisenberg1", "distance": {{ "family": "koranyi" }}, "surface": {{ "kind": "levelset", "expr": {{ "f": "{f}" }}, "domain": [[0, 1], [0, 1]] }} }}"#
        );
        let r = carnot(dir.path(), &["graph-area"], &cfg, &[]);
        assert_eq!(r.code, 0, "{}", r.stderr);
        assert!((column(&r.csv, "graph_area")[0] - 1.0).abs() < 1e-6);
    }
    let cfg = r#"{ "group": "heisenberg1", "distance": { "family": "koranyi" },
        "surface": { "kind": "levelset", "expr": { "f": "x - y^2" }, "domain": [[0, 1], [0, 1]] } }"#;
    let r = carnot(dir.path(), &["graph-area"], cfg, &[]);
    assert_eq!(r.code, 0);
    assert!(column(&r.csv, "rel_diff")[0] < 0.02);
}

#[test]
fn csv_format_and_reproducibility() {
    let dir = TempDir::new().unwrap();
    let cfg = format!(r#"{{ "group": "heisenberg1", "distance": {{ "family": "koranyi" }}, "subspace": "vertical_plane_x0", "samples": 10000, {MC} }}"#);
    let a = carnot(dir.path(), &["beta", "--seed", "9"], &cfg, &[("CARNOT_THREADS", "1")]);
    let b = carnot(dir.path(), &["beta", "--seed", "9"], &cfg, &[("CARNOT_THREADS", "3")]);
    assert_eq!(a.code, 0);
    assert_eq!(a.csv, b.csv);
    assert!(!a.csv.contains('\r') && a.csv.ends_with('\n'));
    assert_eq!(summary_value(&a.stdout, "seed"), "9");
    let c = carnot(dir.path(), &["beta", "--seed", "10"], &cfg, &[]);
    assert_ne!(a.csv, c.csv);
    // 17 significant digits: one leading digit and 16 decimals
    let beta = a.csv.lines().nth(1).unwrap().split(',').nth(2).unwrap();
    let mantissa = beta.split('e').next().unwrap();
    assert_eq!(mantissa.split('.').nth(1).unwrap().len(), 16);
}

#[test]
fn csv_goes_to_stdout_without_out() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{ "group": "heisenberg1", "samples": 100 }"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_carnot")).args(["check-group", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let (summary, csv) = text.split_once("\n\n").unwrap();
    assert!(summary.ends_with("status=pass"));
    assert!(csv.starts_with("check,value,tolerance,passed\n"));
}
