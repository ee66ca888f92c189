//! Re-checks a stored report from its echoed inputs alone. Vertices come from
//! one-step products and risk values from their defining formulas, so
//! nothing here reuses the solvers that produced the report.

use serde::Serialize;

use knockout::certificate::Check;
use knockout::market::TerminalMeasure;
use knockout_oracle::{dual_objective, product_vertices, risk_value};

use crate::commands::{claim_for, load_market, Market};
use crate::error::{exit, Result};
use crate::report::{flag, Report};

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub violated: Vec<String>,
    pub passed: bool,
}

fn check(checks: &mut Vec<Check>, name: &str, residual: f64, tolerance: f64) {
    checks.push(Check {
        name: name.to_string(),
        residual,
        tolerance,
        // NaN residuals fail.
        passed: residual <= tolerance,
    });
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn same(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9)
}

pub fn verify_report(report: &Report) -> Result<VerifyReport> {
    let market = load_market(report.inputs.market.clone())?;
    let claim = claim_for(&market, &report.inputs.claim)?;
    let rm = &report.inputs.risk;
    rm.validate(&market.reference)?;
    let h = claim.payoff();
    let p = market.reference.probabilities();
    let n = h.len();
    let budget = report.inputs.budget;
    let tol = report.tolerances.certificate;
    let mut checks = Vec::new();

    // Polytope: the report's vertex list must be the product set.
    let products = product_vertices(&market.tree);
    let listed = &report.polytope.vertices;
    let unmatched = listed.iter().filter(|v| !products.iter().any(|u| same(u, v))).count()
        + products.iter().filter(|u| !listed.iter().any(|v| same(u, v))).count();
    check(&mut checks, "polytope", unmatched as f64, 0.0);
    let vertices = if unmatched == 0 { listed.clone() } else { products };

    let phi = &report.static_.phi;
    let shape_ok = phi.len() == n
        && phi.iter().all(|v| (0.0..=1.0).contains(v))
        && report.certificate.y.len() == vertices.len()
        && report.certificate.q_tilde.len() == n;
    check(&mut checks, "shape", if shape_ok { 0.0 } else { 1.0 }, 0.0);
    if !shape_ok {
        return Ok(finish(checks));
    }
    let modified: Vec<f64> = (0..n).map(|w| phi[w] * h[w]).collect();
    let usage: Vec<f64> = vertices.iter().map(|q| dot(q, &modified)).collect();
    let scale = budget.abs().max(1.0);

    let excess = usage.iter().map(|u| u - budget).fold(0.0, f64::max);
    check(&mut checks, "feasibility", excess, report.tolerances.feasibility * scale);

    let position: Vec<f64> = (0..n).map(|w| (phi[w] - 1.0) * h[w]).collect();
    let value = risk_value(rm, &position, p);
    let p_scale = value.abs().max(1.0);
    check(&mut checks, "value", (value - report.static_.value).abs(), 1e-8 * p_scale);

    // Dual side at the reported (Q, y).
    let y = &report.certificate.y;
    let q = match TerminalMeasure::from_weights(&report.certificate.q_tilde) {
        Ok(q) => q,
        Err(_) => {
            check(&mut checks, "gap", f64::INFINITY, 0.0);
            return Ok(finish(checks));
        }
    };
    let qv = q.probabilities();
    let penalty = rm.penalty(&q, &market.reference)?;
    let dual = dot(qv, h) - dual_objective(qv, &vertices, h, budget, y)? - penalty;
    let gap_tolerance = if rm.is_polyhedral() {
        1e-6 * p_scale
    } else {
        1e-5_f64.max(1e-6 * p_scale)
    };
    // Weak duality makes value - dual nonnegative up to rounding.
    check(&mut checks, "gap", (value - dual).abs(), gap_tolerance);
    check(&mut checks, "dual_value", (dual - report.certificate.d).abs(), 1e-8 * dual.abs().max(1.0));

    // Level function H (Q - sum_k y_k q_k) per leaf, in measure units.
    let nu: Vec<f64> = (0..n)
        .map(|w| h[w] * (qv[w] - vertices.iter().zip(y).map(|(v, yk)| yk * v[w]).sum::<f64>()))
        .collect();
    let np1: f64 = (0..n).map(|w| (1.0 - phi[w]) * nu[w].max(0.0) + phi[w] * (-nu[w]).max(0.0)).sum();
    check(&mut checks, "NP-1", np1, tol);
    let np2: f64 = y.iter().zip(&usage).map(|(yk, u)| yk.max(0.0) * (budget - u).abs()).sum();
    check(&mut checks, "NP-2", np2, tol);
    if y.iter().any(|yk| *yk > 1e-9) {
        let price = usage.iter().copied().fold(0.0, f64::max);
        check(&mut checks, "capital_boundary", (price - budget).abs(), tol);
    }

    if !report.has_flag(flag::HEDGE_SKIPPED) {
        strategy_checks(report, &market, h, &modified, value, &mut checks);
    }
    Ok(finish(checks))
}

fn strategy_checks(
    report: &Report,
    market: &Market,
    h: &[f64],
    modified: &[f64],
    value: f64,
    checks: &mut Vec<Check>,
) {
    let tree = &market.tree;
    let node_value = |id| report.strategy.iter().find(|s| s.node == id);
    let mut financing = 0.0_f64;
    for node in tree.nodes() {
        let Some(here) = node_value(node.id) else {
            financing = f64::INFINITY;
            continue;
        };
        let Some(parent) = node.parent.and_then(|id| tree.node(id)) else {
            continue;
        };
        let Some(prev) = node_value(parent.id) else {
            financing = f64::INFINITY;
            continue;
        };
        if prev.holdings.len() != tree.assets() {
            financing = f64::INFINITY;
            continue;
        }
        let gains: f64 = (0..tree.assets())
            .map(|a| prev.holdings[a] * (node.prices[a] - parent.prices[a]))
            .sum();
        financing = financing.max((here.value - prev.value - gains).abs());
    }
    let budget = report.inputs.budget;
    let scale = budget.abs().max(1.0);
    check(checks, "self_financing", financing, 1e-8 * scale);
    if !financing.is_finite() {
        return;
    }
    let initial = node_value(tree.root().id).map_or(f64::INFINITY, |s| s.value);
    check(checks, "strategy_budget", (initial - budget).max(0.0), report.tolerances.feasibility * scale);

    let terminal: Vec<f64> = tree
        .leaf_ids()
        .iter()
        .map(|id| node_value(*id).map_or(f64::NAN, |s| s.value))
        .collect();
    let cover = terminal
        .iter()
        .zip(modified)
        .map(|(v, m)| (m - v).max(0.0))
        .fold(0.0, f64::max);
    check(checks, "superhedge", cover, 1e-8 * scale);
    let shortfall: Vec<f64> = h.iter().zip(&terminal).map(|(h, v)| -(h - v).max(0.0)).collect();
    let dynamic = risk_value(&report.inputs.risk, &shortfall, market.reference.probabilities());
    check(checks, "decomposition", (dynamic - value).abs(), report.tolerances.certificate);
}

fn finish(checks: Vec<Check>) -> VerifyReport {
    let violated: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
    VerifyReport {
        passed: violated.is_empty(),
        violated,
        checks,
    }
}

impl VerifyReport {
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let mark = if c.passed { "ok  " } else { "FAIL" };
            out += &format!("{mark} {:<17} residual {:.3e} tolerance {:.1e}\n", c.name, c.residual, c.tolerance);
        }
        if self.passed {
            out += "verify: passed\n";
        } else {
            out += &format!("verify: FAILED ({})\n", self.violated.join(", "));
        }
        out
    }

    pub fn code(&self) -> i32 {
        if self.passed {
            exit::OK
        } else {
            exit::CHECK_FAILED
        }
    }
}
