//! Martingale constraints on terminal path probabilities, arbitrage detection
//! and the polytope of absolutely continuous martingale measures.

use itertools::Itertools;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{HedgeError, Result};
use crate::lp::linalg::{independent_rows, inverse_condition, solve_square};
use crate::lp::{LinearProgram, Relation};
use crate::market::{check_len, Claim, MarketTree, NodeId, TerminalMeasure};

/// The martingale condition at one (non-terminal node, asset) pair, as a
/// linear form in the leaf probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRow {
    pub node: NodeId,
    pub asset: usize,
    /// Price increment over the node's outgoing edge on each leaf's path,
    /// zero for leaves not below the node.
    pub coeffs: Vec<f64>,
    /// Set when the price does not move out of this node.
    pub zero: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MartingaleConstraints {
    rows: Vec<ConstraintRow>,
    leaves: usize,
}

impl MartingaleConstraints {
    pub fn rows(&self) -> &[ConstraintRow] {
        &self.rows
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves
    }

    /// Row-major coefficient matrix.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.coeffs.clone()).collect()
    }

    /// Largest `|(A q)_r|` over all rows.
    pub fn residual(&self, q: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|r| r.coeffs.iter().zip(q).map(|(a, p)| a * p).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    /// `{q >= 0, sum q = 1, A q = 0}` with a zero objective.
    pub fn feasibility_lp(&self) -> LinearProgram {
        let mut lp = LinearProgram::minimize(vec![0.0; self.leaves]);
        for row in self.rows.iter().filter(|r| !r.zero) {
            lp.add_constraint(row.coeffs.clone(), Relation::Eq, 0.0);
        }
        lp.add_constraint(vec![1.0; self.leaves], Relation::Eq, 1.0);
        lp
    }
}

pub fn build_constraints(tree: &MarketTree) -> MartingaleConstraints {
    let leaves = tree.num_leaves();
    let mut rows = Vec::new();
    for node in tree.internal_nodes() {
        for asset in 0..tree.assets() {
            let mut coeffs = vec![0.0; leaves];
            for (leaf, c) in coeffs.iter_mut().enumerate() {
                let path: Vec<_> = tree.path(leaf).collect();
                if let Some(pos) = path.iter().position(|n| n.id == node.id) {
                    let next = path[pos + 1];
                    *c = next.prices[asset] - node.prices[asset];
                }
            }
            let zero = coeffs.iter().all(|c| *c == 0.0);
            rows.push(ConstraintRow {
                node: node.id,
                asset,
                coeffs,
                zero,
            });
        }
    }
    MartingaleConstraints { rows, leaves }
}

/// A trading strategy with nonnegative, somewhere positive terminal gains
/// and zero initial cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArbitrageWitness {
    /// `(node, asset, units held)` for every constraint row.
    pub holdings: Vec<(NodeId, usize, f64)>,
    pub gains: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoArbitrageReport {
    pub arbitrage_free: bool,
    /// Largest achievable minimum leaf probability of a martingale measure.
    pub margin: f64,
    /// A strictly positive martingale measure when arbitrage free.
    pub witness: Option<TerminalMeasure>,
    pub arbitrage: Option<ArbitrageWitness>,
}

/// Decides whether a strictly positive martingale measure exists by
/// maximizing the smallest leaf probability, and otherwise exhibits an
/// arbitrage strategy.
pub fn check_no_arbitrage(constraints: &MartingaleConstraints, tol: f64) -> Result<NoArbitrageReport> {
    let n = constraints.leaves;
    // variables: q (n), margin
    let mut lp = LinearProgram::maximize([vec![0.0; n], vec![1.0]].concat());
    lp.set_free(n);
    for row in constraints.rows.iter().filter(|r| !r.zero) {
        lp.add_constraint([row.coeffs.clone(), vec![0.0]].concat(), Relation::Eq, 0.0);
    }
    lp.add_constraint([vec![1.0; n], vec![0.0]].concat(), Relation::Eq, 1.0);
    for leaf in 0..n {
        let mut coeffs = vec![0.0; n + 1];
        coeffs[leaf] = 1.0;
        coeffs[n] = -1.0;
        lp.add_constraint(coeffs, Relation::Ge, 0.0);
    }
    let sol = lp.solve()?;
    let margin = if sol.is_optimal() { sol.objective } else { f64::NEG_INFINITY };
    if margin > tol {
        let witness = TerminalMeasure::from_weights(&sol.x[..n])?;
        return Ok(NoArbitrageReport {
            arbitrage_free: true,
            margin,
            witness: Some(witness),
            arbitrage: None,
        });
    }
    Ok(NoArbitrageReport {
        arbitrage_free: false,
        margin,
        witness: None,
        arbitrage: arbitrage_strategy(constraints)?,
    })
}

/// Maximizes total gains `A^T xi` subject to `0 <= gains <= 1`.
fn arbitrage_strategy(constraints: &MartingaleConstraints) -> Result<Option<ArbitrageWitness>> {
    let n = constraints.leaves;
    let m = constraints.rows.len();
    let mut objective = vec![0.0; m];
    for (r, row) in constraints.rows.iter().enumerate() {
        objective[r] = row.coeffs.iter().sum();
    }
    let mut lp = LinearProgram::maximize(objective);
    for r in 0..m {
        lp.set_free(r);
    }
    for leaf in 0..n {
        let coeffs: Vec<f64> = constraints.rows.iter().map(|row| row.coeffs[leaf]).collect();
        lp.add_constraint(coeffs.clone(), Relation::Ge, 0.0);
        lp.add_constraint(coeffs, Relation::Le, 1.0);
    }
    let sol = lp.solve()?;
    if !sol.is_optimal() || sol.objective <= 1e-9 {
        return Ok(None);
    }
    let gains = (0..n)
        .map(|leaf| {
            constraints
                .rows
                .iter()
                .zip(&sol.x)
                .map(|(row, xi)| row.coeffs[leaf] * xi)
                .sum()
        })
        .collect();
    let holdings = constraints
        .rows
        .iter()
        .zip(&sol.x)
        .map(|(row, xi)| (row.node, row.asset, *xi))
        .collect();
    Ok(Some(ArbitrageWitness { holdings, gains }))
}

/// An extreme martingale measure and its density against the reference measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub measure: TerminalMeasure,
    pub density: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MartingalePolytope {
    constraints: MartingaleConstraints,
    vertices: Vec<Vertex>,
}

/// Enumerates the extreme points of `{q >= 0, sum q = 1, A q = 0}` as basic
/// feasible solutions: every nonsingular choice of `rank` support columns is
/// solved and kept when nonnegative. Vertices are deduplicated at `tol` and
/// sorted lexicographically.
pub fn enumerate_vertices(
    constraints: &MartingaleConstraints,
    reference: &TerminalMeasure,
    max_leaves: usize,
    tol: f64,
) -> Result<MartingalePolytope> {
    let n = constraints.leaves;
    check_len(n, reference.len())?;
    if n > max_leaves {
        return Err(HedgeError::CapExceeded { leaves: n, cap: max_leaves });
    }

    let mut system: Vec<Vec<f64>> = constraints
        .rows
        .iter()
        .filter(|r| !r.zero)
        .map(|r| {
            // Unit rows make the singularity test independent of price scale.
            let norm = r.coeffs.iter().map(|v| v * v).sum::<f64>().sqrt();
            r.coeffs.iter().map(|v| v / norm).collect()
        })
        .collect();
    system.push(vec![1.0; n]);
    let mut rhs = vec![0.0; system.len()];
    *rhs.last_mut().unwrap() = 1.0;
    // Keep the normalization row first so it always survives the rank filter.
    system.rotate_right(1);
    rhs.rotate_right(1);
    let keep = independent_rows(&system, 1e-10);
    let system: Vec<Vec<f64>> = keep.iter().map(|&i| system[i].clone()).collect();
    let rhs: Vec<f64> = keep.iter().map(|&i| rhs[i]).collect();
    let rank = system.len();

    let mut found: Vec<Vec<f64>> = Vec::new();
    for support in (0..n).combinations(rank) {
        let mut sub = DMatrix::zeros(rank, rank);
        for (r, row) in system.iter().enumerate() {
            for (c, &col) in support.iter().enumerate() {
                sub[(r, c)] = row[col];
            }
        }
        if !well_conditioned(&sub) {
            continue;
        }
        let Some(x) = solve_square(&sub, &rhs) else {
            continue;
        };
        if x.iter().any(|v| *v < -tol) {
            continue;
        }
        let mut q = vec![0.0; n];
        for (&col, v) in support.iter().zip(&x) {
            q[col] = v.max(0.0);
        }
        let total: f64 = q.iter().sum();
        q.iter_mut().for_each(|v| *v /= total);
        if constraints.residual(&q) > tol {
            continue;
        }
        if !found.iter().any(|v| max_dist(v, &q) <= tol) {
            found.push(q);
        }
    }
    if found.is_empty() {
        return Err(HedgeError::EmptyPolytope);
    }
    found.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let vertices = found
        .into_iter()
        .map(|q| {
            let measure = TerminalMeasure::new(q)?;
            let density = measure.density(reference)?;
            Ok(Vertex { measure, density })
        })
        .collect::<Result<_>>()?;
    Ok(MartingalePolytope {
        constraints: constraints.clone(),
        vertices,
    })
}

/// Rejects bases whose singular values span more than thirteen decades.
fn well_conditioned(m: &DMatrix<f64>) -> bool {
    inverse_condition(m) > 1e-13
}

fn max_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

impl MartingalePolytope {
    pub fn constraints(&self) -> &MartingaleConstraints {
        &self.constraints
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_leaves(&self) -> usize {
        self.constraints.leaves
    }

    /// `E^{q_k}[x]` for every vertex `k`.
    pub fn vertex_expectations(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.vertices.iter().map(|v| v.measure.expect(x)).collect()
    }

    /// Superhedging price `max_k E^{q_k}[H]` and an attaining vertex.
    pub fn superhedging_price(&self, claim: &Claim) -> Result<(f64, usize)> {
        let values = self.vertex_expectations(claim.payoff())?;
        values
            .iter()
            .copied()
            .enumerate()
            .fold(None, |best: Option<(usize, f64)>, (k, v)| match best {
                Some((_, b)) if b >= v => best,
                _ => Some((k, v)),
            })
            .map(|(k, v)| (v, k))
            .ok_or(HedgeError::EmptyPolytope)
    }

    /// Whether `q` is a mixture of the vertices, up to an L1 residual of `1e-8`.
    pub fn contains(&self, q: &TerminalMeasure) -> Result<bool> {
        let n = self.num_leaves();
        check_len(n, q.len())?;
        let k = self.vertices.len();
        // variables: mixture weights (k), positive and negative residuals (2n)
        let mut objective = vec![0.0; k];
        objective.extend(std::iter::repeat_n(1.0, 2 * n));
        let mut lp = LinearProgram::minimize(objective);
        for leaf in 0..n {
            let mut coeffs: Vec<f64> = self
                .vertices
                .iter()
                .map(|v| v.measure.probabilities()[leaf])
                .collect();
            coeffs.resize(k + 2 * n, 0.0);
            coeffs[k + leaf] = 1.0;
            coeffs[k + n + leaf] = -1.0;
            lp.add_constraint(coeffs, Relation::Eq, q.probabilities()[leaf]);
        }
        let mut simplex = vec![1.0; k];
        simplex.resize(k + 2 * n, 0.0);
        lp.add_constraint(simplex, Relation::Eq, 1.0);
        let sol = lp.solve()?.into_optimal()?;
        Ok(sol.objective <= 1e-8)
    }
}
