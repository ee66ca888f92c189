//! Dense two-phase tableau simplex.
//!
//! Pricing is Dantzig's rule with lowest-index tie breaking; after a run of
//! degenerate pivots the phase switches to Bland's rule for good, which rules
//! out cycling. Once a basis is optimal, the primal point and the duals are
//! recomputed from the original data by an LU solve of the basis matrix and
//! every optimality condition is re-evaluated into an [`LpCertificate`].

use nalgebra::DMatrix;

use super::linalg::solve_square;
use super::{LinearProgram, LpCertificate, LpError, LpSolution, LpStatus, Relation, Sense};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimplexOptions {
    pub max_pivots: usize,
    /// Minimum magnitude of an admissible pivot element.
    pub pivot_tol: f64,
    /// Reduced costs above `-cost_tol` count as nonnegative.
    pub cost_tol: f64,
    /// Phase-one objective above this (scaled by `1 + max|b|`) means infeasible.
    pub feasibility_tol: f64,
    /// Consecutive degenerate pivots tolerated before switching to Bland's rule.
    pub degenerate_streak: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_pivots: 1_000_000,
            pivot_tol: 1e-10,
            cost_tol: 1e-11,
            feasibility_tol: 1e-9,
            degenerate_streak: 50,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum VarMap {
    /// `x = offset + col`
    Shift { col: usize, offset: f64 },
    /// `x = offset - col`
    Mirror { col: usize, offset: f64 },
    /// `x = pos - neg`
    Split { pos: usize, neg: usize },
}

/// `min c'z  s.t.  A z = b, z >= 0, b >= 0`.
struct StandardForm {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    /// Row sign applied to make `b >= 0`.
    flip: Vec<f64>,
    /// Column usable as an initial basic variable for each row, if any.
    unit_col: Vec<Option<usize>>,
    maps: Vec<VarMap>,
    user_rows: usize,
}

fn standardize(lp: &LinearProgram) -> Result<StandardForm, LpError> {
    let n = lp.num_vars();
    let mut maps = Vec::with_capacity(n);
    let mut cols = 0usize;
    // (column, upper bound on the column) rows generated by finite boxes
    let mut box_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        if lo.is_finite() {
            if hi.is_finite() {
                if hi < lo {
                    return Err(LpError::Malformed(format!("empty bounds on variable {j}")));
                }
                box_rows.push((cols, hi - lo));
            }
            maps.push(VarMap::Shift { col: cols, offset: lo });
            cols += 1;
        } else if hi.is_finite() {
            maps.push(VarMap::Mirror { col: cols, offset: hi });
            cols += 1;
        } else {
            maps.push(VarMap::Split { pos: cols, neg: cols + 1 });
            cols += 2;
        }
    }
    let structural = cols;

    let mut c = vec![0.0; structural];
    let sign = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    for (j, map) in maps.iter().enumerate() {
        let cj = sign * lp.objective[j];
        match *map {
            VarMap::Shift { col, .. } => c[col] += cj,
            VarMap::Mirror { col, .. } => c[col] -= cj,
            VarMap::Split { pos, neg } => {
                c[pos] += cj;
                c[neg] -= cj;
            }
        }
    }

    let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::new();
    for row in &lp.constraints {
        let mut coeffs = vec![0.0; structural];
        let mut rhs = row.rhs;
        for (j, map) in maps.iter().enumerate() {
            let a = row.coeffs[j];
            if a == 0.0 {
                continue;
            }
            match *map {
                VarMap::Shift { col, offset } => {
                    coeffs[col] += a;
                    rhs -= a * offset;
                }
                VarMap::Mirror { col, offset } => {
                    coeffs[col] -= a;
                    rhs -= a * offset;
                }
                VarMap::Split { pos, neg } => {
                    coeffs[pos] += a;
                    coeffs[neg] -= a;
                }
            }
        }
        rows.push((coeffs, row.relation, rhs));
    }
    for &(col, width) in &box_rows {
        let mut coeffs = vec![0.0; structural];
        coeffs[col] = 1.0;
        rows.push((coeffs, Relation::Le, width));
    }

    let slacks = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let total = structural + slacks;
    c.resize(total, 0.0);
    let mut a = Vec::with_capacity(rows.len());
    let mut b = Vec::with_capacity(rows.len());
    let mut flip = Vec::with_capacity(rows.len());
    let mut unit_col = Vec::with_capacity(rows.len());
    let mut next_slack = structural;
    for (mut coeffs, relation, rhs) in rows {
        coeffs.resize(total, 0.0);
        let slack = match relation {
            Relation::Le => Some((next_slack, 1.0)),
            Relation::Ge => Some((next_slack, -1.0)),
            Relation::Eq => None,
        };
        if let Some((col, s)) = slack {
            coeffs[col] = s;
            next_slack += 1;
        }
        let f = if rhs < 0.0 { -1.0 } else { 1.0 };
        if f < 0.0 {
            coeffs.iter_mut().for_each(|v| *v = -*v);
        }
        unit_col.push(slack.and_then(|(col, s)| (s * f > 0.0).then_some(col)));
        a.push(coeffs);
        b.push(f * rhs);
        flip.push(f);
    }

    Ok(StandardForm {
        a,
        b,
        c,
        flip,
        unit_col,
        maps,
        user_rows: lp.constraints.len(),
    })
}

struct Tableau {
    m: usize,
    /// Columns excluding the right-hand side.
    n: usize,
    /// First artificial column; artificials occupy `first_artificial..n`.
    first_artificial: usize,
    /// Row-major `m x (n + 1)`, rhs in the last column.
    t: Vec<f64>,
    /// Reduced costs (first `n` entries) and minus the objective value (last).
    d: Vec<f64>,
    basis: Vec<usize>,
    redundant: Vec<bool>,
    pivots: usize,
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
    Stalled,
}

impl Tableau {
    fn new(sf: &StandardForm) -> Self {
        let m = sf.a.len();
        let base = sf.c.len();
        let artificial_rows: Vec<usize> = (0..m).filter(|&i| sf.unit_col[i].is_none()).collect();
        let n = base + artificial_rows.len();
        let w = n + 1;
        let mut t = vec![0.0; m * w];
        let mut basis = vec![0; m];
        for i in 0..m {
            t[i * w..i * w + base].copy_from_slice(&sf.a[i]);
            t[i * w + n] = sf.b[i];
        }
        for (k, &i) in artificial_rows.iter().enumerate() {
            t[i * w + base + k] = 1.0;
            basis[i] = base + k;
        }
        for i in 0..m {
            if let Some(col) = sf.unit_col[i] {
                basis[i] = col;
            }
        }
        Self {
            m,
            n,
            first_artificial: base,
            t,
            d: vec![0.0; n + 1],
            basis,
            redundant: vec![false; m],
            pivots: 0,
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * (self.n + 1) + j]
    }

    #[inline]
    fn rhs(&self, i: usize) -> f64 {
        self.t[i * (self.n + 1) + self.n]
    }

    /// Loads the cost vector `cost` (length `n`) into the reduced-cost row.
    fn set_costs(&mut self, cost: &[f64]) {
        let w = self.n + 1;
        self.d[..self.n].copy_from_slice(cost);
        self.d[self.n] = 0.0;
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * w..(i + 1) * w];
                for (dj, tij) in self.d.iter_mut().zip(row) {
                    *dj -= cb * tij;
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, s: usize) {
        let w = self.n + 1;
        let p = self.t[r * w + s];
        for v in &mut self.t[r * w..(r + 1) * w] {
            *v /= p;
        }
        self.t[r * w + s] = 1.0;
        let pivot_row: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + s];
            if f != 0.0 {
                let row = &mut self.t[i * w..(i + 1) * w];
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[s] = 0.0;
            }
        }
        let f = self.d[s];
        if f != 0.0 {
            for (v, pv) in self.d.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.d[s] = 0.0;
        }
        self.basis[r] = s;
        self.pivots += 1;
    }

    fn run_phase(&mut self, allow_artificial: bool, opts: &SimplexOptions) -> PhaseOutcome {
        let limit = if allow_artificial { self.n } else { self.first_artificial };
        let mut bland = false;
        let mut streak = 0usize;
        // Columns whose only positive entries are below the pivot tolerance:
        // neither a pivot nor a genuine ray, so they sit out until progress.
        let mut skip = vec![false; limit];
        loop {
            if self.pivots >= opts.max_pivots {
                return PhaseOutcome::Stalled;
            }
            let mut entering = None;
            let mut best = -opts.cost_tol;
            for j in 0..limit {
                if skip[j] {
                    continue;
                }
                let dj = self.d[j];
                if dj < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = dj;
                }
            }
            let Some(s) = entering else {
                return PhaseOutcome::Optimal;
            };

            let mut leaving: Option<(usize, f64, f64)> = None;
            for i in 0..self.m {
                if self.redundant[i] {
                    continue;
                }
                let a = self.at(i, s);
                if a <= opts.pivot_tol {
                    continue;
                }
                let ratio = self.rhs(i).max(0.0) / a;
                match leaving {
                    None => leaving = Some((i, ratio, a)),
                    Some((li, lr, la)) => {
                        let tie = (ratio - lr).abs() <= 1e-12 * (1.0 + lr.abs());
                        let better = if tie {
                            if bland {
                                self.basis[i] < self.basis[li]
                            } else {
                                a > la
                            }
                        } else {
                            ratio < lr
                        };
                        if better {
                            leaving = Some((i, ratio, a));
                        }
                    }
                }
            }
            let Some((r, ratio, _)) = leaving else {
                if (0..self.m).any(|i| !self.redundant[i] && self.at(i, s) > 0.0) {
                    skip[s] = true;
                    continue;
                }
                return PhaseOutcome::Unbounded;
            };
            if ratio <= 1e-14 {
                streak += 1;
                if streak > opts.degenerate_streak {
                    bland = true;
                }
            } else {
                streak = 0;
                skip.fill(false);
            }
            self.pivot(r, s);
        }
    }

    /// Pivots basic artificials out after phase one; rows where that is
    /// impossible are linearly dependent on the others and get marked.
    fn expel_artificials(&mut self) {
        for i in 0..self.m {
            if self.basis[i] < self.first_artificial {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.first_artificial {
                let a = self.at(i, j).abs();
                if a > 1e-8 && best.is_none_or(|(_, b)| a > b) {
                    best = Some((j, a));
                }
            }
            match best {
                Some((j, _)) => self.pivot(i, j),
                None => self.redundant[i] = true,
            }
        }
    }
}

pub(super) fn solve(lp: &LinearProgram, opts: &SimplexOptions) -> Result<LpSolution, LpError> {
    let sf = standardize(lp)?;
    let mut tab = Tableau::new(&sf);

    let not_optimal = |status, pivots| LpSolution {
        status,
        x: Vec::new(),
        duals: Vec::new(),
        objective: f64::NAN,
        pivots,
        certificate: LpCertificate::default(),
    };

    if tab.first_artificial < tab.n {
        let mut cost = vec![0.0; tab.n];
        cost[tab.first_artificial..].iter_mut().for_each(|v| *v = 1.0);
        tab.set_costs(&cost);
        match tab.run_phase(true, opts) {
            PhaseOutcome::Stalled => return Ok(not_optimal(LpStatus::Stalled, tab.pivots)),
            // The phase-one objective is bounded below by zero.
            PhaseOutcome::Unbounded => {
                return Err(LpError::Numerical("phase one reported unbounded".into()))
            }
            PhaseOutcome::Optimal => {}
        }
        let infeasibility = -tab.d[tab.n];
        let scale = 1.0 + sf.b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if infeasibility > opts.feasibility_tol * scale {
            return Ok(not_optimal(LpStatus::Infeasible, tab.pivots));
        }
        tab.expel_artificials();
    }

    let mut cost = sf.c.clone();
    cost.resize(tab.n, 0.0);
    tab.set_costs(&cost);
    match tab.run_phase(false, opts) {
        PhaseOutcome::Stalled => return Ok(not_optimal(LpStatus::Stalled, tab.pivots)),
        PhaseOutcome::Unbounded => return Ok(not_optimal(LpStatus::Unbounded, tab.pivots)),
        PhaseOutcome::Optimal => {}
    }

    recover(lp, &sf, &tab)
}

/// Recomputes primal and dual values from the optimal basis and checks them.
fn recover(lp: &LinearProgram, sf: &StandardForm, tab: &Tableau) -> Result<LpSolution, LpError> {
    let total = sf.c.len();
    let rows: Vec<usize> = (0..tab.m).filter(|&i| !tab.redundant[i]).collect();
    let k = rows.len();
    let basic: Vec<usize> = rows.iter().map(|&i| tab.basis[i]).collect();

    let mut bmat = DMatrix::zeros(k, k);
    for (r, &i) in rows.iter().enumerate() {
        for (s, &col) in basic.iter().enumerate() {
            bmat[(r, s)] = sf.a[i][col];
        }
    }
    let rhs: Vec<f64> = rows.iter().map(|&i| sf.b[i]).collect();
    let cb: Vec<f64> = basic.iter().map(|&col| sf.c[col]).collect();

    let (z_basic, y_rows) = match (
        solve_square(&bmat, &rhs),
        solve_square(&bmat.transpose(), &cb),
    ) {
        (Some(x), Some(y)) => (x, y),
        _ => {
            // Fall back to the tableau itself when the basis is too ill-conditioned.
            let x: Vec<f64> = rows.iter().map(|&i| tab.rhs(i)).collect();
            let y = tableau_duals(sf, tab, &rows);
            (x, y)
        }
    };

    let mut z = vec![0.0; total];
    for (&col, v) in basic.iter().zip(&z_basic) {
        z[col] = if *v < 0.0 && *v > -1e-12 { 0.0 } else { *v };
    }
    let mut y = vec![0.0; tab.m];
    for (&i, v) in rows.iter().zip(&y_rows) {
        y[i] = *v;
    }

    // Optimality conditions in standard form.
    let mut primal = 0.0_f64;
    for i in 0..tab.m {
        let lhs: f64 = sf.a[i].iter().zip(&z).map(|(a, v)| a * v).sum();
        primal = primal.max((lhs - sf.b[i]).abs() / (1.0 + sf.b[i].abs()));
    }
    for v in &z {
        primal = primal.max(-v);
    }
    let mut dual = 0.0_f64;
    let mut compl = 0.0_f64;
    for j in 0..total {
        let mut dj = sf.c[j];
        for i in 0..tab.m {
            dj -= y[i] * sf.a[i][j];
        }
        dual = dual.max(-dj);
        compl = compl.max((z[j] * dj).abs());
    }
    let pobj: f64 = sf.c.iter().zip(&z).map(|(c, v)| c * v).sum();
    let dobj: f64 = sf.b.iter().zip(&y).map(|(b, v)| b * v).sum();
    let gap = (pobj - dobj).abs() / (1.0 + pobj.abs());

    let mut x = vec![0.0; lp.num_vars()];
    for (j, map) in sf.maps.iter().enumerate() {
        x[j] = match *map {
            VarMap::Shift { col, offset } => offset + z[col],
            VarMap::Mirror { col, offset } => offset - z[col],
            VarMap::Split { pos, neg } => z[pos] - z[neg],
        };
    }
    let sense = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let duals: Vec<f64> = (0..sf.user_rows).map(|i| sense * sf.flip[i] * y[i]).collect();

    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective: lp.evaluate(&x),
        x,
        duals,
        pivots: tab.pivots,
        certificate: LpCertificate {
            primal_residual: primal,
            dual_residual: dual,
            complementarity: compl,
            relative_gap: gap,
        },
    })
}

/// Dual values read from the reduced costs of the slack and artificial
/// columns, used only when the basis matrix cannot be factored.
fn tableau_duals(sf: &StandardForm, tab: &Tableau, rows: &[usize]) -> Vec<f64> {
    // For a unit column e_i with cost c, d = c - y_i.
    let mut art = tab.first_artificial;
    let mut y = vec![0.0; tab.m];
    for i in 0..tab.m {
        match sf.unit_col[i] {
            Some(col) => y[i] = sf.c[col] - tab.d[col],
            None => {
                y[i] = -tab.d[art];
                art += 1;
            }
        }
    }
    rows.iter().map(|&i| y[i]).collect()
}
