//! The generalized Neyman-Pearson problem
//! `p^i(Q) = max { E^Q[phi H] : phi in [0, 1], E^{q_k}[phi H] <= V for all k }`,
//! its dual over multiplier weights on the polytope vertices, and the
//! reconstruction of an optimal test from the dual's level function.

use serde::{Deserialize, Serialize};

use crate::error::{HedgeError, Result};
use crate::lp::{LinearProgram, LpCertificate, Relation};
use crate::market::{check_len, RandomizedTest, TerminalMeasure};
use crate::static_hedge::HedgeProblem;

/// Weights below this are treated as zero when deciding which budget rows
/// the multiplier charges.
pub const WEIGHT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct InnerPrimalSolution {
    pub test: RandomizedTest,
    pub value: f64,
    pub certificate: Option<LpCertificate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerDualSolution {
    /// Multiplier mass on each polytope vertex.
    pub weights: Vec<f64>,
    pub value: f64,
    /// `Z_lambda = sum_k y_k Z^k` over leaves.
    pub level: Vec<f64>,
    #[serde(skip)]
    pub certificate: Option<LpCertificate>,
}

impl InnerDualSolution {
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|y| *y <= WEIGHT_TOL)
    }

    pub fn charged_vertices(&self) -> Vec<usize> {
        (0..self.weights.len()).filter(|&k| self.weights[k] > WEIGHT_TOL).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NpTest {
    pub test: RandomizedTest,
    /// Leaf positions where `|H (Z_Q - Z_lambda)| <= eq_tol`.
    pub equality_set: Vec<usize>,
    /// Randomization on `equality_set`, same order.
    pub delta: Vec<f64>,
    pub eq_tol: f64,
    /// Whether a single constant randomization sufficed.
    pub constant_delta: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityGap {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub tolerance: f64,
    pub primal_certificate: Option<LpCertificate>,
    pub dual_certificate: Option<LpCertificate>,
}

impl DualityGap {
    pub fn holds(&self) -> bool {
        self.gap <= self.tolerance
    }
}

/// Complementary-slackness residuals of a test against a dual solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NpDiagnostics {
    /// `E_P[(1 - phi) nu^+]`: mass left on the rejection region.
    pub unfilled: f64,
    /// `E_P[phi nu^-]`: mass placed where the level dominates.
    pub overfilled: f64,
    /// `sum_k y_k (V - E^{q_k}[phi H])`, signed.
    pub slack: f64,
    /// `sum_k y_k |V - E^{q_k}[phi H]|`.
    pub slack_violation: f64,
    /// Largest `(V - E^{q_k}[phi H])^-` over all vertices.
    pub budget_excess: f64,
    pub tolerance: f64,
}

impl NpDiagnostics {
    pub fn np1_holds(&self) -> bool {
        self.unfilled <= self.tolerance && self.overfilled <= self.tolerance
    }

    pub fn np2_holds(&self) -> bool {
        self.slack_violation <= self.tolerance && self.budget_excess <= self.tolerance
    }

    pub fn passed(&self) -> bool {
        self.np1_holds() && self.np2_holds()
    }
}

fn weighted_claim(problem: &HedgeProblem<'_>, q: &TerminalMeasure) -> Result<Vec<f64>> {
    check_len(problem.num_leaves(), q.len())?;
    Ok(problem
        .claim
        .payoff()
        .iter()
        .zip(q.probabilities())
        .map(|(h, q)| h * q)
        .collect())
}

/// `max E^Q[phi H]` over budget-feasible tests. The test is one on `{H = 0}`.
pub fn inner_primal(problem: &HedgeProblem<'_>, q: &TerminalMeasure) -> Result<InnerPrimalSolution> {
    let hq = weighted_claim(problem, q)?;
    let n = problem.num_leaves();
    let leaves = problem.claim.support();
    if leaves.is_empty() {
        return Ok(InnerPrimalSolution {
            test: RandomizedTest::constant(n, 1.0),
            value: 0.0,
            certificate: None,
        });
    }
    let h = problem.claim.payoff();
    let mut lp = LinearProgram::maximize(leaves.iter().map(|&l| hq[l]).collect());
    for j in 0..leaves.len() {
        lp.set_bounds(j, 0.0, 1.0);
    }
    for v in problem.polytope.vertices() {
        let qk = v.measure.probabilities();
        lp.add_constraint(leaves.iter().map(|&l| qk[l] * h[l]).collect(), Relation::Le, problem.budget);
    }
    let sol = lp.solve_with(&problem.simplex_options())?.into_optimal()?;
    let mut values = vec![1.0; n];
    for (&l, x) in leaves.iter().zip(&sol.x) {
        values[l] = *x;
    }
    let test = RandomizedTest::clipped(&values);
    let value = test.values().iter().zip(&hq).map(|(f, w)| f * w).sum();
    Ok(InnerPrimalSolution {
        test,
        value,
        certificate: Some(sol.certificate),
    })
}

/// Level function `Z_lambda` of vertex weights.
pub fn level_of(problem: &HedgeProblem<'_>, weights: &[f64]) -> Result<Vec<f64>> {
    check_len(problem.polytope.num_vertices(), weights.len())?;
    let mut level = vec![0.0; problem.num_leaves()];
    for (v, y) in problem.polytope.vertices().iter().zip(weights) {
        for (acc, z) in level.iter_mut().zip(&v.density) {
            *acc += y * z;
        }
    }
    Ok(level)
}

/// Dual objective `E_P[(H Z_Q - H Z_lambda)^+] + V sum_k y_k` for any
/// nonnegative weights. Every value bounds `p^i(Q)` from above.
pub fn inner_dual_objective(problem: &HedgeProblem<'_>, q: &TerminalMeasure, weights: &[f64]) -> Result<f64> {
    let zq = q.density(problem.reference)?;
    let level = level_of(problem, weights)?;
    let p = problem.reference.probabilities();
    let h = problem.claim.payoff();
    let excess: f64 = (0..h.len())
        .map(|w| p[w] * (h[w] * zq[w] - h[w] * level[w]).max(0.0))
        .sum();
    Ok(excess + problem.budget * weights.iter().sum::<f64>())
}

/// `min E_P[u] + V sum y  s.t.  u >= H Z_Q - H Z_lambda, u >= 0, y >= 0`.
pub fn inner_dual(problem: &HedgeProblem<'_>, q: &TerminalMeasure) -> Result<InnerDualSolution> {
    let hq = weighted_claim(problem, q)?;
    let k = problem.polytope.num_vertices();
    let leaves = problem.claim.support();
    if leaves.is_empty() {
        return Ok(InnerDualSolution {
            weights: vec![0.0; k],
            value: 0.0,
            level: vec![0.0; problem.num_leaves()],
            certificate: None,
        });
    }
    let h = problem.claim.payoff();
    let m = leaves.len();
    // Variables: y (k), then u_w scaled by P_w (m, support leaves only).
    let mut objective = vec![problem.budget; k];
    objective.extend(std::iter::repeat_n(1.0, m));
    let mut lp = LinearProgram::minimize(objective);
    for (j, &l) in leaves.iter().enumerate() {
        let mut coeffs: Vec<f64> = problem
            .polytope
            .vertices()
            .iter()
            .map(|v| h[l] * v.measure.probabilities()[l])
            .collect();
        coeffs.resize(k + m, 0.0);
        coeffs[k + j] = 1.0;
        lp.add_constraint(coeffs, Relation::Ge, hq[l]);
    }
    let sol = lp.solve_with(&problem.simplex_options())?.into_optimal()?;
    let weights: Vec<f64> = sol.x[..k].iter().map(|y| y.max(0.0)).collect();
    Ok(InnerDualSolution {
        value: inner_dual_objective(problem, q, &weights)?,
        level: level_of(problem, &weights)?,
        weights,
        certificate: Some(sol.certificate),
    })
}

/// Solves both sides and compares them at `1e-7 max(1, |p^i|)`.
pub fn strong_duality_check(problem: &HedgeProblem<'_>, q: &TerminalMeasure) -> Result<DualityGap> {
    let primal = inner_primal(problem, q)?;
    let dual = inner_dual(problem, q)?;
    Ok(DualityGap {
        primal: primal.value,
        dual: dual.value,
        gap: (primal.value - dual.value).abs(),
        tolerance: 1e-7 * primal.value.abs().max(1.0),
        primal_certificate: primal.certificate,
        dual_certificate: dual.certificate,
    })
}

/// Default width of the equality set: `rel * max_w H_w max(Z_Q, Z_lambda)`.
pub fn default_eq_tol(problem: &HedgeProblem<'_>, zq: &[f64], level: &[f64], rel: f64) -> f64 {
    let h = problem.claim.payoff();
    let scale = (0..h.len())
        .map(|w| h[w] * zq[w].max(level[w]))
        .fold(0.0_f64, f64::max);
    rel * scale.max(1.0)
}

/// Signed level difference `nu = H (Z_Q - Z_lambda)`.
pub fn level_gap(problem: &HedgeProblem<'_>, q: &TerminalMeasure, dual: &InnerDualSolution) -> Result<Vec<f64>> {
    let zq = q.density(problem.reference)?;
    check_len(zq.len(), dual.level.len())?;
    let h = problem.claim.payoff();
    Ok((0..h.len()).map(|w| h[w] * (zq[w] - dual.level[w])).collect())
}

/// Builds the 0-1 test off the equality set and calibrates the randomization
/// on it so that charged budget rows are tight. A constant randomization is
/// tried first, then a per-leaf one; both maximize `E^Q[phi H]`.
pub fn construct_test(
    problem: &HedgeProblem<'_>,
    q: &TerminalMeasure,
    dual: &InnerDualSolution,
    eq_tol: Option<f64>,
) -> Result<NpTest> {
    let n = problem.num_leaves();
    let h = problem.claim.payoff();
    let zq = q.density(problem.reference)?;
    let nu = level_gap(problem, q, dual)?;
    let eq_tol = eq_tol.unwrap_or_else(|| default_eq_tol(problem, &zq, &dual.level, problem.tolerances.equality));

    let mut values = vec![1.0; n];
    let mut equality_set = Vec::new();
    for w in 0..n {
        if h[w] == 0.0 {
            continue;
        }
        if nu[w] > eq_tol {
            values[w] = 1.0;
        } else if nu[w] < -eq_tol {
            values[w] = 0.0;
        } else {
            equality_set.push(w);
        }
    }

    let charged = dual.charged_vertices();
    let hq = weighted_claim(problem, q)?;
    let row_tol = 1e-9 * problem.budget.max(1.0);
    // Budget usage split into the fixed part and the coefficient on each
    // equality-set leaf.
    let rows: Vec<(f64, Vec<f64>, bool)> = problem
        .polytope
        .vertices()
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let qk = v.measure.probabilities();
            let fixed: f64 = (0..n)
                .filter(|w| !equality_set.contains(w))
                .map(|w| qk[w] * h[w] * values[w])
                .sum();
            let coeffs = equality_set.iter().map(|&w| qk[w] * h[w]).collect();
            (fixed, coeffs, charged.contains(&k))
        })
        .collect();

    let calibrate = |groups: &[Vec<usize>]| -> Result<Option<Vec<f64>>> {
        let g = groups.len();
        let objective = groups.iter().map(|grp| grp.iter().map(|&j| hq[equality_set[j]]).sum()).collect();
        let mut lp = LinearProgram::maximize(objective);
        for j in 0..g {
            lp.set_bounds(j, 0.0, 1.0);
        }
        for (fixed, coeffs, tight) in &rows {
            let c: Vec<f64> = groups.iter().map(|grp| grp.iter().map(|&j| coeffs[j]).sum()).collect();
            let target = problem.budget - fixed;
            lp.add_constraint(c.clone(), Relation::Le, target);
            if *tight {
                lp.add_constraint(c, Relation::Ge, target - row_tol);
            }
        }
        let sol = lp.solve_with(&problem.simplex_options())?;
        if !sol.is_optimal() {
            return Ok(None);
        }
        let mut delta = vec![0.0; equality_set.len()];
        for (grp, x) in groups.iter().zip(&sol.x) {
            for &j in grp {
                delta[j] = x.clamp(0.0, 1.0);
            }
        }
        Ok(Some(delta))
    };

    if equality_set.is_empty() {
        let violated: Vec<String> = rows
            .iter()
            .enumerate()
            .filter(|(_, (fixed, _, tight))| {
                *fixed > problem.budget + row_tol || (*tight && *fixed < problem.budget - row_tol)
            })
            .map(|(k, (fixed, _, _))| format!("vertex {k}: usage {fixed:e} vs budget {:e}", problem.budget))
            .collect();
        if !violated.is_empty() {
            return Err(HedgeError::Calibration(format!(
                "empty equality set (eq_tol {eq_tol:e}) leaves budget rows off: {}",
                violated.join("; ")
            )));
        }
        return Ok(NpTest {
            test: RandomizedTest::clipped(&values),
            equality_set,
            delta: Vec::new(),
            eq_tol,
            constant_delta: true,
        });
    }

    let all: Vec<usize> = (0..equality_set.len()).collect();
    let (delta, constant_delta) = match calibrate(std::slice::from_ref(&all))? {
        Some(delta) => (delta, true),
        None => {
            let singletons: Vec<Vec<usize>> = all.iter().map(|&j| vec![j]).collect();
            match calibrate(&singletons)? {
                Some(delta) => (delta, false),
                None => {
                    return Err(HedgeError::Calibration(format!(
                        "no randomization on {} equality leaves (eq_tol {eq_tol:e}) makes the {} charged budget rows tight",
                        equality_set.len(),
                        charged.len()
                    )))
                }
            }
        }
    };
    for (&w, d) in equality_set.iter().zip(&delta) {
        values[w] = *d;
    }
    Ok(NpTest {
        test: RandomizedTest::clipped(&values),
        equality_set,
        delta,
        eq_tol,
        constant_delta,
    })
}

/// Evaluates the three complementary-slackness residuals of `test`.
pub fn np_residuals(
    problem: &HedgeProblem<'_>,
    test: &RandomizedTest,
    q: &TerminalMeasure,
    dual: &InnerDualSolution,
    tolerance: f64,
) -> Result<NpDiagnostics> {
    check_len(problem.num_leaves(), test.len())?;
    let nu = level_gap(problem, q, dual)?;
    let p = problem.reference.probabilities();
    let phi = test.values();
    let mut unfilled = 0.0;
    let mut overfilled = 0.0;
    for w in 0..nu.len() {
        unfilled += p[w] * (1.0 - phi[w]) * nu[w].max(0.0);
        overfilled += p[w] * phi[w] * (-nu[w]).max(0.0);
    }
    let usage = problem.budget_usage(test)?;
    check_len(usage.len(), dual.weights.len())?;
    let mut slack = 0.0;
    let mut slack_violation = 0.0;
    for (u, y) in usage.iter().zip(&dual.weights) {
        slack += y * (problem.budget - u);
        slack_violation += y * (problem.budget - u).abs();
    }
    let budget_excess = usage.iter().map(|u| (u - problem.budget).max(0.0)).fold(0.0, f64::max);
    Ok(NpDiagnostics {
        unfilled,
        overfilled,
        slack,
        slack_violation,
        budget_excess,
        tolerance,
    })
}

/// Residuals of a constructed test at the acceptance tolerance `1e-7`.
pub fn verify_np(
    np: &NpTest,
    problem: &HedgeProblem<'_>,
    q: &TerminalMeasure,
    dual: &InnerDualSolution,
) -> Result<NpDiagnostics> {
    np_residuals(problem, &np.test, q, dual, 1e-7)
}
