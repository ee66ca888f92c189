//! Kelley's cutting-plane method for convex minimization over a polyhedron.

use super::{LinearProgram, LpError, LpStatus, Relation, SimplexOptions};

#[derive(Clone, Copy, Debug)]
pub struct KelleyOptions {
    /// Stop once the best value is within `tol` of the master lower bound.
    pub tol: f64,
    pub max_iter: usize,
    pub simplex: SimplexOptions,
}

impl Default for KelleyOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 5_000,
            simplex: SimplexOptions::default(),
        }
    }
}

/// Linearization `value + subgradient . (x - point)` gathered at `point`.
#[derive(Clone, Debug)]
pub struct Cut {
    pub point: Vec<f64>,
    pub value: f64,
    pub subgradient: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct KelleyResult {
    /// Best point found.
    pub point: Vec<f64>,
    pub value: f64,
    pub lower_bound: f64,
    pub gap: f64,
    /// Number of oracle evaluations.
    pub iterations: usize,
    /// False when `max_iter` ran out before the gap closed.
    pub converged: bool,
    /// Master lower bound after each master solve.
    pub lower_bounds: Vec<f64>,
    pub cuts: Vec<Cut>,
    /// Master dual weights on the cuts at the final lower bound; they sum to one.
    pub cut_weights: Vec<f64>,
}

/// Minimizes a convex function over the polyhedron described by the rows and
/// bounds of `feasible` (its objective is ignored). The polyhedron must be
/// bounded. `oracle` returns the value and a subgradient at a point.
pub fn kelley_minimize<F>(
    mut oracle: F,
    feasible: &LinearProgram,
    options: &KelleyOptions,
) -> Result<KelleyResult, LpError>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = feasible.num_vars();
    let mut start = feasible.clone();
    start.objective = vec![0.0; n];
    let first = start.solve_with(&options.simplex)?.into_optimal()?;

    // Master over (x, t): min t subject to the polyhedron and t above every cut.
    let mut master = LinearProgram::minimize([vec![0.0; n], vec![1.0]].concat());
    for row in &feasible.constraints {
        let mut coeffs = row.coeffs.clone();
        coeffs.push(0.0);
        master.add_constraint(coeffs, row.relation, row.rhs);
    }
    master.lower[..n].copy_from_slice(&feasible.lower);
    master.upper[..n].copy_from_slice(&feasible.upper);
    master.set_free(n);
    let base_rows = master.constraints.len();

    let mut x = first.x;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut lower_bound = f64::NEG_INFINITY;
    let mut lower_bounds = Vec::new();
    let mut cuts: Vec<Cut> = Vec::new();
    let mut cut_weights = Vec::new();
    let mut iterations = 0;

    loop {
        let (value, subgradient) = oracle(&x);
        iterations += 1;
        if best.as_ref().is_none_or(|(_, v)| value < *v) {
            best = Some((x.clone(), value));
        }
        let best_value = best.as_ref().map(|b| b.1).unwrap_or(value);
        let gap = best_value - lower_bound;
        if gap <= options.tol || iterations >= options.max_iter {
            let (point, value) = best.expect("at least one evaluation");
            return Ok(KelleyResult {
                point,
                value,
                lower_bound,
                gap,
                iterations,
                converged: gap <= options.tol,
                lower_bounds,
                cuts,
                cut_weights,
            });
        }

        // t - g.x >= f(x_k) - g.x_k
        let mut coeffs: Vec<f64> = subgradient.iter().map(|g| -g).collect();
        coeffs.push(1.0);
        let rhs = value - subgradient.iter().zip(&x).map(|(g, v)| g * v).sum::<f64>();
        master.add_constraint(coeffs, Relation::Ge, rhs);
        cuts.push(Cut {
            point: x.clone(),
            value,
            subgradient,
        });

        let sol = master.solve_with(&options.simplex)?;
        if sol.status != LpStatus::Optimal {
            return Err(LpError::NotOptimal(sol.status));
        }
        // Cuts only accumulate, so the bound can only rise; clamp round-off.
        lower_bound = lower_bound.max(sol.objective);
        lower_bounds.push(lower_bound);
        cut_weights = sol.duals[base_rows..].to_vec();
        x = sol.x[..n].to_vec();
    }
}
