use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn knockout(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_knockout")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn solve_t1(dir: &Path, risk: &str, budget: &str, extra: &[&str]) -> (Output, PathBuf) {
    let out = dir.join(format!("{risk}-{budget}.json"));
    let market = fixture("t1_market.json");
    let claim = fixture("t1_claim.json");
    let risk = fixture(risk);
    let mut args = vec![
        "solve",
        "--market",
        path(&market),
        "--claim",
        path(&claim),
        "--risk",
        path(&risk),
        "--budget",
        budget,
        "--out",
        path(&out),
    ];
    args.extend_from_slice(extra);
    (knockout(&args), out)
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

const SIXTH: &str = "0.16666666666666666";

#[test]
fn price_of_the_t1_call() {
    let out = knockout(&["price", "--market", path(&fixture("t1_market.json")), "--claim", path(&fixture("t1_claim.json"))]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((report["superhedging_price"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-11);
    assert_eq!(report["polytope"]["attaining_vertex"], 1);
    let root = &report["strategy"][0];
    assert!((root["holdings"][0].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-11);
}

#[test]
fn price_of_the_zero_claim() {
    let out = knockout(&["price", "--market", path(&fixture("t1_market.json")), "--claim", path(&fixture("zero_claim.json"))]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["superhedging_price"].as_f64(), Some(0.0));
}

#[test]
fn arbitrage_exits_with_a_witness() {
    let out = knockout(&[
        "price",
        "--market",
        path(&fixture("arbitrage_market.json")),
        "--claim",
        path(&fixture("arbitrage_claim.json")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("arbitrage witness"), "{err}");
    assert!(err.contains("node 0 asset 0"));
}

#[test]
fn invalid_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let (out, _) = solve_t1(dir.path(), "avar.json", "-1", &[]);
    assert_eq!(out.status.code(), Some(2));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"payoff\": {\"1\": 1}}").unwrap();
    let out = knockout(&["price", "--market", path(&fixture("t1_market.json")), "--claim", path(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    let out = knockout(&["price", "--market", path(&bad), "--claim", path(&bad)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn t1_report_and_verification() {
    let dir = tempfile::tempdir().unwrap();
    let (out, report_path) = solve_t1(dir.path(), "expected_shortfall.json", SIXTH, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = read_json(&report_path);
    for key in ["inputs", "tolerances", "polytope", "static", "certificate", "strategy", "flags"] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    let c = &r["certificate"];
    assert!((c["p"].as_f64().unwrap() - 1.0 / 6.0).abs() < 1e-11);
    assert!((c["d"].as_f64().unwrap() - 1.0 / 6.0).abs() < 1e-11);
    assert_eq!(c["y"], serde_json::json!([0.0, 1.0]));
    assert!((r["static"]["phi"][0].as_f64().unwrap() - 0.5).abs() < 1e-11);
    for key in ["np1", "np2", "decomposition"] {
        assert!(c["residuals"][key].as_f64().unwrap() <= 1e-9, "{key}");
    }

    let out = knockout(&["verify", path(&report_path)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn reports_are_bit_stable() {
    let dir = tempfile::tempdir().unwrap();
    let (_, a) = solve_t1(dir.path(), "entropic.json", SIXTH, &[]);
    let first = std::fs::read(&a).unwrap();
    let (_, b) = solve_t1(dir.path(), "entropic.json", SIXTH, &[]);
    assert_eq!(first, std::fs::read(&b).unwrap());
}

fn tamper(report: &Path, dir: &Path, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut r = read_json(report);
    edit(&mut r);
    let out = dir.join("tampered.json");
    std::fs::write(&out, serde_json::to_string(&r).unwrap()).unwrap();
    out
}

#[test]
fn tampered_reports_fail_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let (_, report) = solve_t1(dir.path(), "expected_shortfall.json", SIXTH, &[]);

    let phi = tamper(&report, dir.path(), |r| r["static"]["phi"][0] = 0.4.into());
    let out = knockout(&["verify", path(&phi)]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("FAIL NP-2"), "{text}");

    let budget = tamper(&report, dir.path(), |r| r["inputs"]["budget"] = 0.1.into());
    let out = knockout(&["verify", path(&budget)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout).unwrap().contains("FAIL feasibility"));

    let q = tamper(&report, dir.path(), |r| r["certificate"]["y"] = serde_json::json!([0.0, 0.5]));
    let out = knockout(&["verify", path(&q)]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("FAIL gap") && text.contains("FAIL NP-1"), "{text}");
}

#[test]
fn covered_budget_is_flagged_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let (out, report) = solve_t1(dir.path(), "avar.json", "0.5", &[]);
    assert_eq!(out.status.code(), Some(0));
    let r = read_json(&report);
    assert_eq!(r["static"]["value"].as_f64(), Some(0.0));
    assert!(r["static"]["phi"].as_array().unwrap().iter().all(|v| v.as_f64() == Some(1.0)));
    let flags: Vec<&str> = r["flags"].as_array().unwrap().iter().map(|f| f.as_str().unwrap()).collect();
    assert!(flags.contains(&"degenerate_certificate") && flags.contains(&"short_circuit"));
}

#[test]
fn entropic_report_notes_the_cutting_plane_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let (out, report) = solve_t1(dir.path(), "entropic.json", SIXTH, &["--tol-kelley", "1e-7"]);
    assert_eq!(out.status.code(), Some(0));
    let r = read_json(&report);
    assert!(r["certificate"]["gap"].as_f64().unwrap() <= 1e-5);
    assert_eq!(r["static"]["solver_path"], "cutting_plane");
    assert_eq!(r["tolerances"]["kelley"].as_f64(), Some(1e-7));
    assert!(r["flags"].as_array().unwrap().iter().any(|f| f == "cutting_plane_tolerance"));
}

#[test]
fn skip_hedge_stops_after_the_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let (out, report) = solve_t1(dir.path(), "avar.json", SIXTH, &["--skip-hedge"]);
    assert_eq!(out.status.code(), Some(0));
    let r = read_json(&report);
    assert_eq!(r["strategy"], serde_json::json!([]));
    assert!(r["certificate"]["residuals"]["decomposition"].is_null());
    assert_eq!(knockout(&["verify", path(&report)]).status.code(), Some(0));
}

#[test]
fn polytope_and_oracle_commands() {
    let out = knockout(&["polytope", "--market", path(&fixture("t1_market.json"))]);
    assert_eq!(out.status.code(), Some(0));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["vertices"].as_array().unwrap().len(), 2);
    assert_eq!(r["no_arbitrage"], true);
    assert_eq!(r["densities"][0], serde_json::json!([0.0, 3.0, 0.0]));
    assert_eq!(r["densities"][1], serde_json::json!([1.0, 0.0, 2.0]));

    let out = knockout(&["polytope", "--market", path(&fixture("arbitrage_market.json"))]);
    assert_eq!(out.status.code(), Some(3));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["no_arbitrage"], false);
    assert_eq!(r["vertices"], serde_json::json!([]));
    let gains = r["arbitrage"]["gains"].as_array().unwrap();
    assert!(gains.iter().all(|g| g.as_f64().unwrap() >= -1e-12));
    assert!(gains.iter().any(|g| g.as_f64().unwrap() > 1e-9));

    let out = knockout(&[
        "oracle",
        "--market",
        path(&fixture("t1_market.json")),
        "--claim",
        path(&fixture("t1_claim.json")),
        "--risk",
        path(&fixture("expected_shortfall.json")),
        "--budget",
        SIXTH,
        "--grid",
        "100",
        "--seed",
        "7",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["passed"], true);
    assert_eq!(r["weak_duality"]["violations"], serde_json::json!([]));
}

#[test]
fn verify_at_a_given_measure() {
    let dir = tempfile::tempdir().unwrap();
    let (out, report) = solve_t1(dir.path(), "expected_shortfall.json", SIXTH, &[]);
    assert_eq!(out.status.code(), Some(0));
    let q = dir.path().join("q.json");
    std::fs::write(&q, r#"{"probabilities": {"1": 0.5, "2": 0.25, "3": 0.25}}"#).unwrap();
    let out = knockout(&["verify", path(&report), "--q", path(&q)]);
    assert_eq!(out.status.code(), Some(0));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["passed"], true);
    assert!((r["primal"].as_f64().unwrap() - 0.25).abs() < 1e-9);
    assert!((r["dual"].as_f64().unwrap() - 0.25).abs() < 1e-9);
    assert_eq!(r["phi"], serde_json::json!([0.5, 1.0, 1.0]));

    std::fs::write(&q, r#"{"probabilities": {"1": 0.5, "2": 0.25}}"#).unwrap();
    let out = knockout(&["verify", path(&report), "--q", path(&q)]);
    assert_eq!(out.status.code(), Some(2));
}
