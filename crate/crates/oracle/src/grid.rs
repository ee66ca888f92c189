use knockout::risk::RiskMeasure;
use serde::{Deserialize, Serialize};

use crate::risk::{lipschitz_bound, risk_value};
use crate::{check_len, OracleError, Result};

pub const MAX_EFFECTIVE_LEAVES: usize = 4;

/// Result of the exhaustive search with its guaranteed bracket
/// `lower <= p <= value`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridBracket {
    pub value: f64,
    pub lower: f64,
    pub lipschitz: f64,
    pub grid: usize,
    /// Best grid test over all leaves (one where the claim vanishes).
    pub argmin: Vec<f64>,
    pub points: u64,
}

impl GridBracket {
    pub fn contains(&self, x: f64, slack: f64) -> bool {
        x >= self.lower - slack && x <= self.value + slack
    }
}

/// Minimizes `rho((phi - 1) H)` over the grid `{0, 1/grid, ..., 1}` on the
/// leaves where `H > 0`, keeping `E^{q_k}[phi H] <= budget + 1e-9` for every
/// vertex `q_k`.
///
/// Risk is nonincreasing in `phi`, so the last coordinate is always the
/// largest feasible grid value and only the others are enumerated.
pub fn grid_oracle_static(
    vertices: &[Vec<f64>],
    reference: &[f64],
    claim: &[f64],
    budget: f64,
    rm: &RiskMeasure,
    grid: usize,
) -> Result<GridBracket> {
    let n = reference.len();
    check_len(n, claim.len())?;
    for v in vertices {
        check_len(n, v.len())?;
    }
    if grid < 10 {
        return Err(OracleError::GridTooCoarse(grid));
    }
    let effective: Vec<usize> = (0..n).filter(|&w| claim[w] > 0.0).collect();
    let m = effective.len();
    if m > MAX_EFFECTIVE_LEAVES {
        return Err(OracleError::TooManyLeaves {
            effective: m,
            max: MAX_EFFECTIVE_LEAVES,
        });
    }
    let lipschitz = lipschitz_bound(rm, claim, reference);
    if m == 0 {
        return Ok(GridBracket {
            value: risk_value(rm, &vec![0.0; n], reference),
            lower: 0.0,
            lipschitz,
            grid,
            argmin: vec![1.0; n],
            points: 1,
        });
    }

    let search = Search::new(vertices, reference, claim, &effective, budget, rm, grid);
    let mut state = State {
        best: f64::INFINITY,
        best_index: vec![0; m],
        index: vec![0; m],
        points: 0,
    };
    let usage = vec![0.0; vertices.len()];
    search.descend(0, &usage, &mut state);

    let mut argmin = vec![1.0; n];
    for (j, &w) in effective.iter().enumerate() {
        argmin[w] = state.best_index[j] as f64 / grid as f64;
    }
    // phi = 0 is always feasible, so the search found something.
    let x: Vec<f64> = (0..n).map(|w| (argmin[w] - 1.0) * claim[w]).collect();
    let value = risk_value(rm, &x, reference);
    Ok(GridBracket {
        value,
        lower: value - lipschitz / grid as f64,
        lipschitz,
        grid,
        argmin,
        points: state.points,
    })
}

struct State {
    best: f64,
    best_index: Vec<usize>,
    index: Vec<usize>,
    points: u64,
}

/// Risk restricted to the effective leaves plus one atom for `{H = 0}`.
enum Compressed {
    /// `max_i (c_i - sum_j w_ij phi_j)`.
    Linear { weights: Vec<Vec<f64>>, constants: Vec<f64> },
    Avar { beta: f64 },
    Entropic { gamma: f64 },
}

struct Search {
    m: usize,
    grid: usize,
    step: f64,
    cap: f64,
    /// `coef[j][k] = q_k H` at effective leaf `j`.
    coef: Vec<Vec<f64>>,
    heights: Vec<f64>,
    probs: Vec<f64>,
    zero_mass: f64,
    risk: Compressed,
}

impl Search {
    fn new(
        vertices: &[Vec<f64>],
        reference: &[f64],
        claim: &[f64],
        effective: &[usize],
        budget: f64,
        rm: &RiskMeasure,
        grid: usize,
    ) -> Self {
        let coef = effective
            .iter()
            .map(|&w| vertices.iter().map(|q| q[w] * claim[w]).collect())
            .collect();
        let risk = match rm {
            RiskMeasure::Scenarios { scenarios } => Compressed::Linear {
                weights: scenarios
                    .iter()
                    .map(|s| effective.iter().map(|&w| reference[w] * s.density[w] * claim[w]).collect())
                    .collect(),
                constants: scenarios
                    .iter()
                    .map(|s| {
                        effective
                            .iter()
                            .map(|&w| reference[w] * s.density[w] * claim[w])
                            .sum::<f64>()
                            - s.penalty
                    })
                    .collect(),
            },
            RiskMeasure::AverageValueAtRisk { beta } => Compressed::Avar { beta: *beta },
            RiskMeasure::Entropic { gamma } => Compressed::Entropic { gamma: *gamma },
        };
        let probs: Vec<f64> = effective.iter().map(|&w| reference[w]).collect();
        let zero_mass = 1.0 - probs.iter().sum::<f64>();
        Self {
            m: effective.len(),
            grid,
            step: 1.0 / grid as f64,
            cap: budget + 1e-9,
            coef,
            heights: effective.iter().map(|&w| claim[w]).collect(),
            probs,
            zero_mass: zero_mass.max(0.0),
            risk,
        }
    }

    fn fits(&self, usage: &[f64], j: usize, level: usize) -> bool {
        let phi = level as f64 * self.step;
        usage.iter().zip(&self.coef[j]).all(|(u, a)| u + a * phi <= self.cap)
    }

    fn descend(&self, depth: usize, usage: &[f64], state: &mut State) {
        if depth + 1 == self.m {
            let j = depth;
            // Largest feasible level from the tightest vertex, then nudged.
            let mut t = f64::INFINITY;
            for (u, a) in usage.iter().zip(&self.coef[j]) {
                if *a > 0.0 {
                    t = t.min((self.cap - u) / a);
                }
            }
            let mut level = if t.is_finite() {
                (t * self.grid as f64).floor().clamp(-1.0, self.grid as f64) as i64
            } else {
                self.grid as i64
            };
            while level >= 0 && !self.fits(usage, j, level as usize) {
                level -= 1;
            }
            if level < 0 {
                return;
            }
            while (level as usize) < self.grid && self.fits(usage, j, level as usize + 1) {
                level += 1;
            }
            state.index[j] = level as usize;
            state.points += 1;
            let value = self.value(&state.index);
            if value < state.best {
                state.best = value;
                state.best_index.clone_from(&state.index);
            }
            return;
        }
        let mut next = usage.to_vec();
        for level in 0..=self.grid {
            if !self.fits(usage, depth, level) {
                break;
            }
            let phi = level as f64 * self.step;
            for (k, slot) in next.iter_mut().enumerate() {
                *slot = usage[k] + self.coef[depth][k] * phi;
            }
            state.index[depth] = level;
            self.descend(depth + 1, &next, state);
        }
    }

    fn value(&self, index: &[usize]) -> f64 {
        let phi = |j: usize| index[j] as f64 * self.step;
        match &self.risk {
            Compressed::Linear { weights, constants } => weights
                .iter()
                .zip(constants)
                .map(|(w, c)| c - (0..self.m).map(|j| w[j] * phi(j)).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max),
            Compressed::Avar { beta } => {
                // Losses are nonnegative, the H = 0 atom has loss zero.
                let loss = |j: usize| (1.0 - phi(j)) * self.heights[j];
                let mut best = f64::INFINITY;
                for s in (0..self.m).map(loss).chain(std::iter::once(0.0)) {
                    let tail: f64 = (0..self.m).map(|j| self.probs[j] * (loss(j) - s).max(0.0)).sum::<f64>()
                        + self.zero_mass * (-s).max(0.0);
                    best = best.min(s + tail / beta);
                }
                best
            }
            Compressed::Entropic { gamma } => {
                let exps: Vec<f64> = (0..self.m).map(|j| gamma * (1.0 - phi(j)) * self.heights[j]).collect();
                let shift = exps.iter().copied().fold(0.0, f64::max);
                let sum: f64 = (0..self.m).map(|j| self.probs[j] * (exps[j] - shift).exp()).sum::<f64>()
                    + self.zero_mass * (-shift).exp();
                (shift + sum.ln()) / gamma
            }
        }
    }
}
