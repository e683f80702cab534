use allnorm_web::{generate, hierarchy, oracle, solve};
use serde_json::Value;

const MATCHING: &str = "p lb 2 2 3\ne 0 0\ne 0 1\ne 1 1\n";

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn solve_returns_report_and_shape() {
    let v = parse(&solve(MATCHING, 1.0 / 16.0, None).unwrap());
    assert_eq!(v["graph"]["edges"].as_array().unwrap().len(), 3);
    assert_eq!(v["report"]["assignment"], serde_json::json!([0, 1]));
    assert_eq!(v["report"]["ratios"]["inf"].as_f64(), Some(1.0));
    assert!(v["report"]["checks"].as_object().unwrap().values().all(|c| c == "pass"));
}

#[test]
fn generated_instances_round_trip() {
    let text = generate("nested-star", 4, 4, 1, 0).unwrap();
    let v = parse(&solve(&text, 1.0 / 16.0, Some(3)).unwrap());
    assert_eq!(v["report"]["instance"]["edges"].as_u64(), Some(16));
    assert!(generate("nested-star", 3, 3, 1, 0).is_err());
    assert!(generate("bogus", 3, 3, 1, 0).is_err());
}

#[test]
fn oracle_checks_lengths_and_runs() {
    assert!(oracle(MATCHING, &[1.0], 0.1).is_err());
    let v = parse(&oracle(MATCHING, &[1.0, 0.5], 1.0 / 16.0).unwrap());
    assert_eq!(v["checksPass"], true);
    assert_eq!(v["loads"].as_array().unwrap().len(), 2);
    assert!(v["norms"].get("inf").is_some());
}

#[test]
fn hierarchy_levels_are_nested() {
    let v = parse(&hierarchy("p lb 3 1 3\ne 0 0\ne 1 0\ne 2 0\n", 1.0 / 16.0).unwrap());
    assert_eq!(v["depth"].as_u64(), Some(2));
    let masses: Vec<f64> = v["levels"].as_array().unwrap().iter().map(|l| l["mass"].as_f64().unwrap()).collect();
    assert_eq!(masses, [1.0, 2.0, 3.0]);
}

#[test]
fn malformed_input_is_an_error() {
    assert!(solve("p lb 1 1 1\ne 0 9\n", 0.1, None).is_err());
    assert!(hierarchy("garbage", 0.1).is_err());
}
