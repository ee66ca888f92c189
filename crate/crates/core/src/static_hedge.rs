//! The static problem: minimize `rho((phi - 1) H)` over randomized tests whose
//! modified claim `phi H` costs at most the budget under every martingale
//! measure.
//!
//! Polyhedral risk measures become a single LP (epigraph form for scenarios,
//! the Rockafellar-Uryasev form for AVaR). The entropic measure goes through
//! Kelley's method and is then refined by an active-set Newton method on the
//! equivalent separable objective `sum_w P_w exp(gamma (1 - phi_w) H_w)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{HedgeError, Result};
use crate::lp::linalg::{independent_rows, solve_square};
use crate::lp::{kelley_minimize, KelleyOptions, LinearProgram, Relation, SimplexOptions};
use crate::market::{check_len, Claim, RandomizedTest, TerminalMeasure};
use crate::martingale::MartingalePolytope;
use crate::risk::RiskMeasure;

/// A budget-constrained hedging instance: everything defining the admissible
/// set of randomized tests.
#[derive(Clone, Copy, Debug)]
pub struct HedgeProblem<'a> {
    pub reference: &'a TerminalMeasure,
    pub polytope: &'a MartingalePolytope,
    pub claim: &'a Claim,
    pub budget: f64,
    pub tolerances: Tolerances,
}

impl<'a> HedgeProblem<'a> {
    pub fn new(
        reference: &'a TerminalMeasure,
        polytope: &'a MartingalePolytope,
        claim: &'a Claim,
        budget: f64,
    ) -> Result<Self> {
        check_len(polytope.num_leaves(), reference.len())?;
        check_len(polytope.num_leaves(), claim.len())?;
        if !(budget > 0.0) || !budget.is_finite() {
            return Err(HedgeError::Invalid {
                field: "budget",
                node: None,
                reason: format!("budget {budget} must be positive"),
            });
        }
        Ok(Self {
            reference,
            polytope,
            claim,
            budget,
            tolerances: Tolerances::default(),
        })
    }

    pub fn with_tolerances(mut self, tolerances: Tolerances) -> Self {
        self.tolerances = tolerances;
        self
    }

    pub fn num_leaves(&self) -> usize {
        self.claim.len()
    }

    /// Superhedging price `U_0` of the unmodified claim.
    pub fn superhedging_price(&self) -> Result<f64> {
        Ok(self.polytope.superhedging_price(self.claim)?.0)
    }

    /// Cost `E^{q_k}[phi H]` of the modified claim under every vertex.
    pub fn budget_usage(&self, test: &RandomizedTest) -> Result<Vec<f64>> {
        self.polytope.vertex_expectations(&self.claim.modified(test)?)
    }

    /// Vertices whose budget row is tight within `tol`.
    pub fn active_vertices(&self, test: &RandomizedTest, tol: f64) -> Result<Vec<usize>> {
        Ok(self
            .budget_usage(test)?
            .iter()
            .enumerate()
            .filter(|(_, u)| (*u - self.budget).abs() <= tol)
            .map(|(k, _)| k)
            .collect())
    }

    pub(crate) fn simplex_options(&self) -> SimplexOptions {
        SimplexOptions {
            max_pivots: self.tolerances.max_pivots,
            feasibility_tol: self.tolerances.feasibility,
            ..SimplexOptions::default()
        }
    }

    /// Budget rows `sum_w q^k_w H_w phi_w <= V` over the given leaves.
    fn budget_rows(&self, leaves: &[usize]) -> Vec<Vec<f64>> {
        let h = self.claim.payoff();
        self.polytope
            .vertices()
            .iter()
            .map(|v| {
                let q = v.measure.probabilities();
                leaves.iter().map(|&l| q[l] * h[l]).collect()
            })
            .collect()
    }
}

/// Whether `test` is a randomized test whose modified claim fits the budget
/// under every vertex (tolerance `1e-9`).
pub fn feasible(
    test: &RandomizedTest,
    polytope: &MartingalePolytope,
    claim: &Claim,
    budget: f64,
) -> Result<bool> {
    check_len(claim.len(), test.len())?;
    check_len(polytope.num_leaves(), test.len())?;
    if test.values().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Ok(false);
    }
    let usage = polytope.vertex_expectations(&claim.modified(test)?)?;
    Ok(usage.iter().all(|u| *u <= budget + 1e-9))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverPath {
    Lp,
    CuttingPlane,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CuttingPlaneStats {
    pub iterations: usize,
    pub lower_bound: f64,
    pub gap: f64,
    pub converged: bool,
    /// Whether the active-set refinement replaced the cutting-plane point.
    pub refined: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StaticSolution {
    pub test: RandomizedTest,
    pub value: f64,
    /// Vertices whose budget row is tight within `1e-7`.
    pub active_budget_vertices: Vec<usize>,
    pub solver_path: SolverPath,
    /// Set when the budget covers the superhedging price and `phi = 1`.
    pub short_circuit: bool,
    /// Worst-case measure read off the solver's dual information.
    pub worst_case: TerminalMeasure,
    pub cutting_plane: Option<CuttingPlaneStats>,
}

pub fn solve_static(problem: &HedgeProblem<'_>, rm: &RiskMeasure) -> Result<StaticSolution> {
    let path = if rm.is_polyhedral() {
        SolverPath::Lp
    } else {
        SolverPath::CuttingPlane
    };
    solve_static_via(problem, rm, path)
}

/// Like [`solve_static`] but with a forced solver path. The cutting-plane
/// path applies to every risk measure; the LP path only to polyhedral ones.
pub fn solve_static_via(
    problem: &HedgeProblem<'_>,
    rm: &RiskMeasure,
    path: SolverPath,
) -> Result<StaticSolution> {
    rm.validate(problem.reference)?;
    let n = problem.num_leaves();
    let u0 = problem.superhedging_price()?;
    if problem.budget >= u0 {
        let test = RandomizedTest::constant(n, 1.0);
        let worst = rm.evaluate(&vec![0.0; n], problem.reference)?.maximizer;
        return Ok(StaticSolution {
            active_budget_vertices: problem.active_vertices(&test, 1e-7)?,
            test,
            value: 0.0,
            solver_path: path,
            short_circuit: true,
            worst_case: worst,
            cutting_plane: None,
        });
    }

    let (test, worst_case, cutting_plane) = match path {
        SolverPath::Lp => {
            let (test, worst) = match rm {
                RiskMeasure::Scenarios { .. } => scenario_lp(problem, rm)?,
                RiskMeasure::AverageValueAtRisk { beta } => avar_lp(problem, *beta)?,
                RiskMeasure::Entropic { .. } => {
                    return Err(HedgeError::Invalid {
                        field: "risk",
                        node: None,
                        reason: "the entropic risk measure has no LP reformulation".into(),
                    })
                }
            };
            (test, worst, None)
        }
        SolverPath::CuttingPlane => {
            let (test, worst, stats) = cutting_plane(problem, rm)?;
            (test, worst, Some(stats))
        }
    };

    let value = rm
        .evaluate(&problem.claim.shortfall_position(&test)?, problem.reference)?
        .value;
    Ok(StaticSolution {
        active_budget_vertices: problem.active_vertices(&test, 1e-7)?,
        test,
        value,
        solver_path: path,
        short_circuit: false,
        worst_case,
        cutting_plane,
    })
}

fn full_test(n: usize, leaves: &[usize], phi: &[f64]) -> RandomizedTest {
    let mut values = vec![1.0; n];
    for (&l, v) in leaves.iter().zip(phi) {
        values[l] = *v;
    }
    RandomizedTest::clipped(&values)
}

/// `min t  s.t.  t >= E^{Q_i}[(1 - phi) H] - alpha_i`, budget rows, box.
fn scenario_lp(problem: &HedgeProblem<'_>, rm: &RiskMeasure) -> Result<(RandomizedTest, TerminalMeasure)> {
    let RiskMeasure::Scenarios { scenarios } = rm else {
        unreachable!("caller dispatches on the variant")
    };
    let leaves = problem.claim.support();
    let m = leaves.len();
    let p = problem.reference.probabilities();
    let h = problem.claim.payoff();

    let mut objective = vec![0.0; m + 1];
    objective[m] = 1.0;
    let mut lp = LinearProgram::minimize(objective);
    for j in 0..m {
        lp.set_bounds(j, 0.0, 1.0);
    }
    lp.set_free(m);
    for s in scenarios {
        let q: Vec<f64> = p.iter().zip(&s.density).map(|(p, z)| p * z).collect();
        let mut coeffs: Vec<f64> = leaves.iter().map(|&l| q[l] * h[l]).collect();
        coeffs.push(1.0);
        let rhs = q.iter().zip(h).map(|(q, h)| q * h).sum::<f64>() - s.penalty;
        lp.add_constraint(coeffs, Relation::Ge, rhs);
    }
    for row in problem.budget_rows(&leaves) {
        lp.add_constraint([row, vec![0.0]].concat(), Relation::Le, problem.budget);
    }
    let sol = lp.solve_with(&problem.simplex_options())?.into_optimal()?;

    let mut mix = vec![0.0; p.len()];
    for (s, mu) in scenarios.iter().zip(&sol.duals) {
        for (leaf, w) in mix.iter_mut().enumerate() {
            *w += mu.max(0.0) * p[leaf] * s.density[leaf];
        }
    }
    Ok((
        full_test(p.len(), &leaves, &sol.x[..m]),
        TerminalMeasure::from_weights(&mix)?,
    ))
}

/// `min s + E_P[u] / beta  s.t.  u_w >= (1 - phi_w) H_w - s, u >= 0`, budget rows, box.
fn avar_lp(problem: &HedgeProblem<'_>, beta: f64) -> Result<(RandomizedTest, TerminalMeasure)> {
    let leaves = problem.claim.support();
    let m = leaves.len();
    let n = problem.num_leaves();
    let p = problem.reference.probabilities();
    let h = problem.claim.payoff();

    // variables: phi (m), s, u (n)
    let mut objective = vec![0.0; m + 1 + n];
    objective[m] = 1.0;
    for w in 0..n {
        objective[m + 1 + w] = p[w] / beta;
    }
    let mut lp = LinearProgram::minimize(objective);
    for j in 0..m {
        lp.set_bounds(j, 0.0, 1.0);
    }
    lp.set_free(m);
    for w in 0..n {
        let mut coeffs = vec![0.0; m + 1 + n];
        if let Some(j) = leaves.iter().position(|&l| l == w) {
            coeffs[j] = h[w];
        }
        coeffs[m] = 1.0;
        coeffs[m + 1 + w] = 1.0;
        lp.add_constraint(coeffs, Relation::Ge, h[w]);
    }
    for row in problem.budget_rows(&leaves) {
        let mut coeffs = row;
        coeffs.resize(m + 1 + n, 0.0);
        lp.add_constraint(coeffs, Relation::Le, problem.budget);
    }
    let sol = lp.solve_with(&problem.simplex_options())?.into_optimal()?;
    let worst: Vec<f64> = sol.duals[..n].iter().map(|d| d.max(0.0)).collect();
    Ok((
        full_test(n, &leaves, &sol.x[..m]),
        TerminalMeasure::from_weights(&worst)?,
    ))
}

fn cutting_plane(
    problem: &HedgeProblem<'_>,
    rm: &RiskMeasure,
) -> Result<(RandomizedTest, TerminalMeasure, CuttingPlaneStats)> {
    let leaves = problem.claim.support();
    let m = leaves.len();
    let n = problem.num_leaves();
    let h = problem.claim.payoff();

    let mut feasible = LinearProgram::minimize(vec![0.0; m]);
    for j in 0..m {
        feasible.set_bounds(j, 0.0, 1.0);
    }
    for row in problem.budget_rows(&leaves) {
        feasible.add_constraint(row, Relation::Le, problem.budget);
    }

    let mut maximizers: Vec<TerminalMeasure> = Vec::new();
    let mut failure = None;
    let oracle = |phi: &[f64]| {
        let test = full_test(n, &leaves, phi);
        let x: Vec<f64> = h.iter().zip(test.values()).map(|(h, f)| (f - 1.0) * h).collect();
        match rm.evaluate(&x, problem.reference) {
            Ok(e) => {
                let q = e.maximizer.probabilities();
                let grad = leaves.iter().map(|&l| -h[l] * q[l]).collect();
                maximizers.push(e.maximizer);
                (e.value, grad)
            }
            Err(err) => {
                failure.get_or_insert(err);
                (f64::INFINITY, vec![0.0; phi.len()])
            }
        }
    };
    let options = KelleyOptions {
        tol: problem.tolerances.kelley,
        max_iter: problem.tolerances.max_kelley_iterations,
        simplex: problem.simplex_options(),
    };
    let result = kelley_minimize(oracle, &feasible, &options)?;
    if let Some(err) = failure {
        return Err(err);
    }

    // Mixture of cut measures weighted by the master duals. Its dual value is
    // at least the master lower bound.
    let mut mix = vec![0.0; n];
    for (q, w) in maximizers.iter().zip(&result.cut_weights) {
        for (acc, qv) in mix.iter_mut().zip(q.probabilities()) {
            *acc += w.max(0.0) * qv;
        }
    }
    let mixed = TerminalMeasure::from_weights(&mix).unwrap_or_else(|_| maximizers[0].clone());

    let mut stats = CuttingPlaneStats {
        iterations: result.iterations,
        lower_bound: result.lower_bound,
        gap: result.gap,
        converged: result.converged,
        refined: false,
    };
    let mut phi = result.point.clone();
    let mut worst = mixed;

    if let RiskMeasure::Entropic { gamma } = rm {
        let p = problem.reference.probabilities();
        let weights: Vec<f64> = leaves.iter().map(|&l| p[l]).collect();
        let slopes: Vec<f64> = leaves.iter().map(|&l| gamma * h[l]).collect();
        let rows = problem.budget_rows(&leaves);
        if let Some(better) = refine_exponential(&weights, &slopes, &rows, problem.budget, &phi) {
            let value_of = |phi: &[f64]| -> Result<f64> {
                let t = full_test(n, &leaves, phi);
                Ok(rm.evaluate(&problem.claim.shortfall_position(&t)?, problem.reference)?.value)
            };
            if value_of(&better)? <= result.value + 1e-12 {
                phi = better;
                stats.refined = true;
                let t = full_test(n, &leaves, &phi);
                worst = rm
                    .evaluate(&problem.claim.shortfall_position(&t)?, problem.reference)?
                    .maximizer;
            }
        }
    }
    let value_now = {
        let t = full_test(n, &leaves, &phi);
        rm.evaluate(&problem.claim.shortfall_position(&t)?, problem.reference)?.value
    };
    stats.gap = (value_now - stats.lower_bound).max(0.0);

    Ok((full_test(n, &leaves, &phi), worst, stats))
}

/// Active-set Newton method for
/// `min sum_i w_i exp(s_i (1 - x_i))  s.t.  rows x <= cap, 0 <= x <= 1`
/// started from the feasible point `start`. Returns `None` when it cannot
/// certify a KKT point within its iteration budget.
pub(crate) fn refine_exponential(
    weights: &[f64],
    slopes: &[f64],
    rows: &[Vec<f64>],
    cap: f64,
    start: &[f64],
) -> Option<Vec<f64>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Fixed {
        Free,
        Lower,
        Upper,
    }
    let n = start.len();
    let k = rows.len();
    let row_dot = |r: &[f64], x: &[f64]| -> f64 { r.iter().zip(x).map(|(a, b)| a * b).sum() };
    let objective = |x: &[f64]| -> f64 {
        (0..n).map(|i| weights[i] * (slopes[i] * (1.0 - x[i])).exp()).sum()
    };
    let row_tol = 1e-11 * (1.0 + cap.abs());

    let mut x: Vec<f64> = start.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    if rows.iter().any(|r| row_dot(r, &x) > cap + 1e-9) {
        return None;
    }
    let mut fixed: Vec<Fixed> = x
        .iter()
        .map(|&v| {
            if v <= 0.0 {
                Fixed::Lower
            } else if v >= 1.0 {
                Fixed::Upper
            } else {
                Fixed::Free
            }
        })
        .collect();
    let mut working: Vec<usize> = (0..k)
        .filter(|&r| (row_dot(&rows[r], &x) - cap).abs() <= 1e-9)
        .collect();

    for _ in 0..400 {
        let free: Vec<usize> = (0..n).filter(|&i| fixed[i] == Fixed::Free).collect();
        let e: Vec<f64> = (0..n).map(|i| weights[i] * (slopes[i] * (1.0 - x[i])).exp()).collect();
        let grad: Vec<f64> = (0..n).map(|i| -slopes[i] * e[i]).collect();
        let hess: Vec<f64> = (0..n).map(|i| slopes[i] * slopes[i] * e[i]).collect();
        let scale = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs())).max(1e-300);

        // Independent working rows restricted to the free variables.
        let restricted: Vec<Vec<f64>> = working
            .iter()
            .map(|&r| free.iter().map(|&i| rows[r][i]).collect())
            .collect();
        let keep = independent_rows(&restricted, 1e-10);
        let active: Vec<usize> = keep.iter().map(|&j| working[j]).collect();
        let a = active.len();

        // Newton step on the free variables subject to the active rows.
        let mut schur = DMatrix::zeros(a, a);
        let mut rhs = vec![0.0; a];
        for (p, &rp) in active.iter().enumerate() {
            let residual = cap - row_dot(&rows[rp], &x);
            let mut s = -residual;
            for &i in &free {
                s -= rows[rp][i] * grad[i] / hess[i];
            }
            rhs[p] = s;
            for (q, &rq) in active.iter().enumerate() {
                schur[(p, q)] = free.iter().map(|&i| rows[rp][i] * rows[rq][i] / hess[i]).sum();
            }
        }
        let nu = solve_square(&schur, &rhs)?;
        let mut dir = vec![0.0; n];
        for &i in &free {
            let bt_nu: f64 = active.iter().zip(&nu).map(|(&r, v)| rows[r][i] * v).sum();
            dir[i] = -(grad[i] + bt_nu) / hess[i];
        }
        let step_norm = dir.iter().fold(0.0_f64, |m, d| m.max(d.abs()));

        if step_norm <= 1e-13 {
            // Stationary on the working face: check multiplier signs.
            let mut worst: Option<(f64, usize, bool)> = None;
            for (&r, &v) in active.iter().zip(&nu) {
                if v < -1e-10 * scale && worst.is_none_or(|w| -v > w.0) {
                    worst = Some((-v, r, true));
                }
            }
            for i in 0..n {
                let reduced = grad[i] + active.iter().zip(&nu).map(|(&r, v)| rows[r][i] * v).sum::<f64>();
                let violation = match fixed[i] {
                    Fixed::Lower => -reduced,
                    Fixed::Upper => reduced,
                    Fixed::Free => continue,
                };
                if violation > 1e-10 * scale && worst.is_none_or(|w| violation > w.0) {
                    worst = Some((violation, i, false));
                }
            }
            match worst {
                None => {
                    let ok = rows.iter().all(|r| row_dot(r, &x) <= cap + row_tol);
                    return ok.then_some(x);
                }
                Some((_, r, true)) => working.retain(|&w| w != r),
                Some((_, i, false)) => fixed[i] = Fixed::Free,
            }
            working.retain(|w| active.contains(w));
            continue;
        }

        // Longest step keeping bounds and inactive rows satisfied.
        let mut alpha = 1.0_f64;
        let mut blocking: Option<(usize, bool)> = None;
        for &i in &free {
            let limit = if dir[i] < 0.0 {
                x[i] / -dir[i]
            } else if dir[i] > 0.0 {
                (1.0 - x[i]) / dir[i]
            } else {
                continue;
            };
            if limit < alpha {
                alpha = limit;
                blocking = Some((i, false));
            }
        }
        for r in 0..k {
            if working.contains(&r) {
                continue;
            }
            let rate = row_dot(&rows[r], &dir);
            // Rows spanned by the working set move at rounding-level rates.
            let noise = (1e-11 * step_norm * rows[r].iter().map(|v| v.abs()).sum::<f64>()).max(1e-14 * (1.0 + cap));
            if rate > noise {
                let limit = ((cap - row_dot(&rows[r], &x)) / rate).max(0.0);
                if limit < alpha {
                    alpha = limit;
                    blocking = Some((r, true));
                }
            }
        }

        // Backtrack on the objective when already on the working face.
        let on_face = active.iter().all(|&r| (row_dot(&rows[r], &x) - cap).abs() <= row_tol);
        if on_face {
            let f0 = objective(&x);
            let slope: f64 = (0..n).map(|i| grad[i] * dir[i]).sum();
            let mut t = alpha;
            loop {
                let trial: Vec<f64> = (0..n).map(|i| x[i] + t * dir[i]).collect();
                if objective(&trial) <= f0 + 1e-4 * t * slope || t < 1e-12 {
                    break;
                }
                t *= 0.5;
            }
            if t < alpha {
                alpha = t;
                blocking = None;
            }
        }

        for i in 0..n {
            x[i] = (x[i] + alpha * dir[i]).clamp(0.0, 1.0);
        }
        match blocking {
            Some((i, false)) => {
                if dir[i] < 0.0 {
                    x[i] = 0.0;
                    fixed[i] = Fixed::Lower;
                } else {
                    x[i] = 1.0;
                    fixed[i] = Fixed::Upper;
                }
            }
            Some((r, true)) => working.push(r),
            None => {}
        }
        working.retain(|w| active.contains(w) || Some((*w, true)) == blocking);
    }
    None
}
