use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_allnorm"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("bad json ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn single_edge_solve() {
    let dir = TempDir::new().unwrap();
    let g = write(&dir, "one.txt", "p lb 1 1 1\nw 0 3\ne 0 0\n");
    let out = run(&["solve", s(&g)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json_of(&out);
    assert_eq!(r["assignment"], serde_json::json!([0]));
    for (_, v) in r["ratios"].as_object().unwrap() {
        assert_eq!(v.as_f64(), Some(1.0));
    }
    assert_eq!(r["params"]["eps"].as_f64(), Some(0.0625));
    assert_eq!(r["params"]["alpha"].as_f64(), Some(8.0));
    assert_eq!(r["passes"].as_u64(), Some(3));
}

#[test]
fn nested_star_with_verify() {
    let dir = TempDir::new().unwrap();
    let g = dir.path().join("ns.txt");
    let out = run(&["gen", "--kind", "nested-star", "--clients", "4", "--servers", "4", "-o", s(&g)]);
    assert!(out.status.success());
    let out = run(&["solve", s(&g), "--verify"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json_of(&out);
    assert_eq!(r["opt"]["inf"].as_f64(), Some(1.0));
    assert!(r["ratios"]["inf"].as_f64().unwrap() <= 19.0);
    assert_eq!(r["checks"]["nmh.sizeFactor"], "pass");
    assert!(r["checks"].as_object().unwrap().values().all(|v| v == "pass"));
}

#[test]
fn report_schema_and_files() {
    let dir = TempDir::new().unwrap();
    let g = dir.path().join("r.txt");
    run(&["gen", "--clients", "5", "--servers", "3", "--max-weight", "3", "--seed", "4", "-o", s(&g)]);
    let json = dir.path().join("report.json");
    let trace = dir.path().join("trace.csv");
    let out = run(&["solve", s(&g), "--json", s(&json), "--trace", s(&trace)]);
    assert_eq!(out.status.code(), Some(0));
    let r = json_of(&out);
    let keys: Vec<&str> = r.as_object().unwrap().keys().map(String::as_str).collect();
    for k in [
        "instance", "params", "assignment", "loads", "norms", "opt", "ratios", "passes", "peakWords",
        "wallMillis", "checks",
    ] {
        assert!(keys.contains(&k), "missing {k}");
    }
    for k in ["clients", "servers", "edges", "totalWeight"] {
        assert!(r["instance"].get(k).is_some());
    }
    for k in ["eps", "alpha", "T", "earlyStopped"] {
        assert!(r["params"].get(k).is_some());
    }
    let on_disk: Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(on_disk, r);
    let rows = fs::read_to_string(&trace).unwrap();
    let iterations = r["params"]["iterations"].as_u64().unwrap() as usize;
    assert_eq!(rows.lines().count(), iterations + 1);
    assert!(rows.starts_with("t,minCoverage,passes"));
    assert_eq!(r["passes"].as_u64().unwrap() as usize, iterations + 2);
}

#[test]
fn reruns_are_identical_apart_from_wall_time() {
    let dir = TempDir::new().unwrap();
    let g = dir.path().join("g.txt");
    run(&["gen", "--kind", "complete", "--clients", "4", "--servers", "3", "--max-weight", "2", "-o", s(&g)]);
    let strip = |out: Output| {
        let mut v = json_of(&out);
        v.as_object_mut().unwrap().remove("wallMillis");
        serde_json::to_string_pretty(&v).unwrap()
    };
    let a = strip(run(&["solve", s(&g), "--shuffle-seed", "9"]));
    let b = strip(run(&["solve", s(&g), "--shuffle-seed", "9"]));
    assert_eq!(a, b);
}

#[test]
fn generator_is_deterministic() {
    let a = run(&["gen", "--kind", "regular(2)", "--clients", "6", "--servers", "4", "--seed", "3"]);
    let b = run(&["gen", "--kind", "regular:2", "--clients", "6", "--servers", "4", "--seed", "3"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with("p lb 6 4 12"));
}

#[test]
fn validation_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.txt", "p lb 1 1 1\ne 0 7\n");
    assert_eq!(run(&["solve", s(&bad)]).status.code(), Some(2));
    assert_eq!(run(&["solve", "/nonexistent/graph.txt"]).status.code(), Some(2));
    let isolated = write(&dir, "iso.txt", "p lb 2 1 1\ne 0 0\n");
    assert_eq!(run(&["solve", s(&isolated)]).status.code(), Some(2));
    assert_eq!(run(&["gen", "--kind", "nested-star", "--clients", "3", "--servers", "3"]).status.code(), Some(2));
    let g = write(&dir, "g.txt", "p lb 2 1 2\ne 0 0\ne 1 0\n");
    let lam = write(&dir, "lam.txt", "l 5 1.0\n");
    assert_eq!(run(&["oracle", s(&g), s(&lam)]).status.code(), Some(2));
    let zero = write(&dir, "zero.txt", "l 0 0\n");
    assert_eq!(run(&["oracle", s(&g), s(&zero)]).status.code(), Some(2));
}

#[test]
fn unfinished_covering_exits_3() {
    let dir = TempDir::new().unwrap();
    let g = write(&dir, "m.txt", "p lb 2 2 2\ne 0 0\ne 1 1\n");
    let out = run(&["solve", s(&g), "--t-override", "1", "--no-early-stop"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn oracle_with_values() {
    let dir = TempDir::new().unwrap();
    let g = write(&dir, "g.txt", "p lb 1 1 1\ne 0 0\n");
    let lam = write(&dir, "lam.txt", "# values\nl 0 2.5\n");
    let out = run(&["oracle", s(&g), s(&lam)]);
    assert_eq!(out.status.code(), Some(0));
    let r = json_of(&out);
    let z = r["z"].as_array().unwrap();
    assert_eq!(z.len(), 1);
    assert!((z[0][2].as_f64().unwrap() - 1.12890625).abs() < 1e-12);
    assert_eq!(r["checks"]["ccc"], true);
}

#[test]
fn nmh_dump() {
    let dir = TempDir::new().unwrap();
    let g = write(&dir, "g.txt", "p lb 3 1 3\ne 0 0\ne 1 0\ne 2 0\n");
    let out = run(&["nmh", s(&g)]);
    assert_eq!(out.status.code(), Some(0));
    let r = json_of(&out);
    assert_eq!(r["depth"].as_u64(), Some(2));
    let levels = r["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 3);
    let masses: Vec<f64> = levels.iter().map(|l| l["mass"].as_f64().unwrap()).collect();
    assert_eq!(masses, [1.0, 2.0, 3.0]);
    assert_eq!(r["passes"].as_u64(), Some(1));
}

#[test]
fn verify_tiny_instance() {
    let dir = TempDir::new().unwrap();
    let g = dir.path().join("v.txt");
    run(&["gen", "--clients", "4", "--servers", "2", "--seed", "1", "-o", s(&g)]);
    let out = run(&["verify", s(&g)]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("pass nmh.sizeFactor8"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn bench_directory() {
    let dir = TempDir::new().unwrap();
    for seed in 0..3 {
        let p = dir.path().join(format!("g{seed}.txt"));
        run(&["gen", "--clients", "4", "--servers", "2", "--seed", &seed.to_string(), "-o", s(&p)]);
    }
    let csv = dir.path().join("out.csv");
    let target = TempDir::new().unwrap();
    let out = run(&["bench", s(dir.path()), "--csv", s(&target.path().join("b.csv"))]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(target.path().join("b.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("file,clients,servers"));
    assert!(lines[1].starts_with("g0.txt,4,2,"));
    assert!(lines[1..].iter().all(|l| l.ends_with(",pass")));
    assert!(!csv.exists());
}
