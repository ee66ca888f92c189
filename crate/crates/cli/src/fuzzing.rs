//! Entry points shared by the fuzz targets and the corpus replay test. Each
//! accepts arbitrary bytes and panics only on a broken invariant.

use knockout::market::{Claim, TerminalMeasure};
use knockout::martingale::{build_constraints, check_no_arbitrage, enumerate_vertices};
use knockout::np_test::strong_duality_check;
use knockout::static_hedge::HedgeProblem;

use crate::commands::parse_measure;
use crate::report::{parse_report, render};

const CLAIM_MARKET: &str = r#"{"assets": 1, "nodes": [
    {"id": 0, "parent": null, "time": 0, "prices": [1.0]},
    {"id": 1, "parent": 0, "time": 1, "prices": [2.0]},
    {"id": 2, "parent": 0, "time": 1, "prices": [1.0]},
    {"id": 3, "parent": 0, "time": 1, "prices": [0.5]}],
    "terminal_probabilities": {"1": 0.25, "2": 0.25, "3": 0.5}}"#;

pub fn market(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok((tree, reference)) = knockout::io::load_market(text) else { return };
    assert_eq!(reference.len(), tree.num_leaves());
    // Enumeration is exponential in the leaf count.
    if tree.num_leaves() > 8 || tree.nodes().len() > 32 {
        return;
    }
    let constraints = build_constraints(&tree);
    if let Ok(report) = check_no_arbitrage(&constraints, 1e-9) {
        if report.arbitrage_free {
            if let Ok(poly) = enumerate_vertices(&constraints, &reference, 8, 1e-9) {
                for v in poly.vertices() {
                    assert!(constraints.residual(v.measure.probabilities()) <= 1e-6);
                }
            }
        }
    }
}

pub fn claim(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (tree, _) = knockout::io::load_market(CLAIM_MARKET).expect("fixed market is valid");
    if let Ok(claim) = knockout::io::load_claim(text, &tree) {
        assert_eq!(claim.len(), tree.num_leaves());
        assert!(claim.payoff().iter().all(|h| h.is_finite() && *h >= 0.0));
    }
}

pub fn risk(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let reference = TerminalMeasure::uniform(3);
    let Ok(rm) = knockout::io::load_risk(text, &reference) else { return };
    if let Ok(e) = rm.evaluate(&[-1.0, 0.0, 0.5], &reference) {
        assert!(!e.value.is_nan());
    }
}

pub fn measure(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(file) = parse_measure(text) else { return };
    let (tree, reference) = knockout::io::load_market(CLAIM_MARKET).expect("fixed market is valid");
    let Ok(values) = knockout::io::leaf_vector(&tree, &file.probabilities, "probabilities") else { return };
    let Ok(q) = TerminalMeasure::new(values) else { return };
    let poly = enumerate_vertices(&build_constraints(&tree), &reference, 8, 1e-9).expect("fixed market has vertices");
    let claim = Claim::new(vec![1.0, 0.0, 0.0]).expect("fixed claim is valid");
    let problem = HedgeProblem::new(&reference, &poly, &claim, 0.2).expect("fixed problem is valid");
    if let Ok(gap) = strong_duality_check(&problem, &q) {
        assert!(gap.primal <= gap.dual + gap.tolerance);
    }
}

pub fn report(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(report) = parse_report(text) else { return };
    // Rendering is a fixed point after one pass.
    if let Ok(once) = render(&report) {
        if let Ok(back) = parse_report(&once) {
            assert_eq!(render(&back).ok().as_deref(), Some(once.as_str()));
        }
    }
    if report.polytope.vertices.len() <= 16 && report.inputs.market.nodes.len() <= 32 {
        let _ = crate::verify::verify_report(&report);
    }
}
