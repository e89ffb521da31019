use std::fs;
use std::process::{Command, Output};

use cournot::harness::{self, GenSpec};
use cournot::model::Interval;
use tempfile::TempDir;

fn cournot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cournot")).args(args).output().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_owned()
}

fn gen(dir: &TempDir, firms: &str, n: &str, seed: &str) -> String {
    let p = path(dir, "inst.json");
    let out = cournot(&["gen", "--N", firms, "--n", n, "--seed", seed, "--out", &p]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    p
}

#[test]
fn gen_is_deterministic() {
    let a = cournot(&["gen", "--N", "4", "--n", "2", "--seed", "7"]);
    let b = cournot(&["gen", "--N", "4", "--n", "2", "--seed", "7"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = cournot(&["gen", "--N", "4", "--n", "2", "--seed", "8"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn solved_points_have_small_gap() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "3", "3", "1");
    for algo in ["--global", "--local"] {
        let out = cournot(&["solve", algo, "--in", &inst, "--eps", "1e-6"]);
        assert_eq!(out.status.code(), Some(0));
        let s = json(&out);
        assert_eq!(s["status"], "EpsEquilibrium");
        let point = path(&dir, "point.json");
        fs::write(&point, s["point"].to_string()).unwrap();
        let g = json(&cournot(&["gap", "--in", &inst, "--point", &point]));
        assert!(g["gap"].as_f64().unwrap() <= s["eps"].as_f64().unwrap());
        assert_eq!(g["improvements"].as_array().unwrap().len(), 3);
    }
}

#[test]
fn iteration_limit_exits_three_and_log_is_jsonl() {
    let dir = TempDir::new().unwrap();
    let mut spec = GenSpec::new(10, 10, 6);
    spec.alpha = Interval::new(8.0, 12.0);
    let inst = path(&dir, "hard.json");
    fs::write(&inst, harness::generate(&spec).unwrap().to_json()).unwrap();
    let log = path(&dir, "trace.jsonl");
    let out = cournot(&[
        "solve",
        "--in",
        &inst,
        "--eps",
        "0",
        "--absolute",
        "--max-iter",
        "2",
        "--log",
        &log,
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&out)["status"], "IterationLimit");
    let text = fs::read_to_string(&log).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!lines.is_empty());
    assert!(lines.iter().all(|l| l.get("rho").is_some()));
}

#[test]
fn oracle_reports_a_grid_point() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "2", "1", "3");
    let out = cournot(&["oracle", "--in", &inst, "--grid", "51"]);
    assert!(out.status.success());
    let r = json(&out);
    assert_eq!(r["point"].as_array().unwrap().len(), 2);
    assert_eq!(r["grid_points"], 51 * 51);
}

#[test]
fn bench_writes_csv_and_log() {
    let dir = TempDir::new().unwrap();
    let csv = path(&dir, "bench.csv");
    let log = path(&dir, "runs.jsonl");
    let out = Command::new(env!("CARGO_BIN_EXE_cournot"))
        .args([
            "bench",
            "--cells",
            "3x2,4x0",
            "--instances",
            "3",
            "--out",
            &csv,
            "--log",
            &log,
        ])
        .env("COURNOT_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("N,n,algorithm,avg_time_s,avg_iterations,eps_equilibria_found")
    );
    assert_eq!(lines.count(), 2);
    assert_eq!(fs::read_to_string(&log).unwrap().lines().count(), 6);
}

#[test]
fn bad_input_exits_one() {
    let dir = TempDir::new().unwrap();
    let missing = path(&dir, "missing.json");
    assert_eq!(cournot(&["solve", "--in", &missing]).status.code(), Some(1));
    let garbage = path(&dir, "garbage.json");
    fs::write(&garbage, "{\"alpha\": 1}").unwrap();
    assert_eq!(cournot(&["solve", "--in", &garbage]).status.code(), Some(1));
    assert_eq!(cournot(&["gen", "--N", "2", "--n", "3"]).status.code(), Some(1));
    let inst = gen(&dir, "2", "2", "0");
    let point = path(&dir, "p.json");
    fs::write(&point, "[1.0]").unwrap();
    let out = cournot(&["gap", "--in", &inst, "--point", &point]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    let out = Command::new(env!("CARGO_BIN_EXE_cournot"))
        .args(["bench", "--cells", "2x2"])
        .env("COURNOT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
