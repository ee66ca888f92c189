//! Convex risk measures given by dual data.
//!
//! Each variant is a supremum `rho(X) = sup_Q { E^Q[-X] - alpha(Q) }` over
//! measures absolutely continuous with respect to the reference measure `P`:
//!
//! * [`RiskMeasure::Scenarios`]: finitely many densities with penalties,
//! * [`RiskMeasure::AverageValueAtRisk`]: densities bounded by `1 / beta`,
//! * [`RiskMeasure::Entropic`]: relative entropy scaled by `1 / gamma`.
//!
//! All three are finite and continuous on the whole leaf space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HedgeError, Result};
use crate::lp::{LinearProgram, LpStatus, Relation};
use crate::market::{check_len, TerminalMeasure};

const DENSITY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Density `dQ/dP` over leaves.
    pub density: Vec<f64>,
    pub penalty: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum RiskMeasure {
    Scenarios { scenarios: Vec<Scenario> },
    #[serde(rename = "avar")]
    AverageValueAtRisk { beta: f64 },
    Entropic { gamma: f64 },
}

/// The value of `rho(X)` with a measure attaining the supremum.
#[derive(Clone, Debug, PartialEq)]
pub struct RiskEvaluation {
    pub value: f64,
    pub maximizer: TerminalMeasure,
}

impl RiskMeasure {
    pub fn scenarios(scenarios: Vec<Scenario>, reference: &TerminalMeasure) -> Result<Self> {
        let rm = Self::Scenarios { scenarios };
        rm.validate(reference)?;
        Ok(rm)
    }

    /// Expected loss under the reference measure itself.
    pub fn expected_shortfall(leaves: usize) -> Self {
        Self::Scenarios {
            scenarios: vec![Scenario {
                density: vec![1.0; leaves],
                penalty: 0.0,
            }],
        }
    }

    pub fn average_value_at_risk(beta: f64) -> Result<Self> {
        let rm = Self::AverageValueAtRisk { beta };
        rm.check_parameters()?;
        Ok(rm)
    }

    pub fn entropic(gamma: f64) -> Result<Self> {
        let rm = Self::Entropic { gamma };
        rm.check_parameters()?;
        Ok(rm)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Scenarios { .. } => "scenarios",
            Self::AverageValueAtRisk { .. } => "avar",
            Self::Entropic { .. } => "entropic",
        }
    }

    /// Whether the risk measure is positively homogeneous.
    pub fn is_coherent(&self) -> bool {
        match self {
            Self::Scenarios { scenarios } => scenarios.iter().all(|s| s.penalty == 0.0),
            Self::AverageValueAtRisk { .. } => true,
            Self::Entropic { .. } => false,
        }
    }

    /// Whether `rho` is piecewise linear, so that hedging reduces to one LP.
    pub fn is_polyhedral(&self) -> bool {
        !matches!(self, Self::Entropic { .. })
    }

    fn check_parameters(&self) -> Result<()> {
        match self {
            Self::Scenarios { scenarios } => {
                if scenarios.is_empty() {
                    return Err(bad("scenarios", "scenario list is empty"));
                }
                if scenarios.iter().any(|s| !(s.penalty >= 0.0) || !s.penalty.is_finite()) {
                    return Err(bad("penalty", "penalties must be finite and nonnegative"));
                }
                let min = scenarios.iter().map(|s| s.penalty).fold(f64::INFINITY, f64::min);
                if min != 0.0 {
                    return Err(bad("penalty", "the smallest penalty must be zero"));
                }
            }
            Self::AverageValueAtRisk { beta } => {
                if !(*beta > 0.0 && *beta <= 1.0) {
                    return Err(bad("beta", format!("level {beta} outside (0, 1]")));
                }
            }
            Self::Entropic { gamma } => {
                if !(*gamma > 0.0) || !gamma.is_finite() {
                    return Err(bad("gamma", format!("parameter {gamma} must be positive")));
                }
            }
        }
        Ok(())
    }

    /// Checks parameters and, for scenarios, that every density is a
    /// probability density with respect to `reference`.
    pub fn validate(&self, reference: &TerminalMeasure) -> Result<()> {
        self.check_parameters()?;
        if let Self::Scenarios { scenarios } = self {
            for (i, s) in scenarios.iter().enumerate() {
                check_len(reference.len(), s.density.len())?;
                if s.density.iter().any(|z| !z.is_finite() || *z < 0.0) {
                    return Err(bad("density", format!("scenario {i} has a negative entry")));
                }
                let mass = reference.expect(&s.density)?;
                if (mass - 1.0).abs() > DENSITY_TOL {
                    return Err(bad("density", format!("scenario {i} has E_P[Z] = {mass}")));
                }
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64], reference: &TerminalMeasure) -> Result<RiskEvaluation> {
        self.validate(reference)?;
        check_len(reference.len(), x.len())?;
        let p = reference.probabilities();
        match self {
            Self::Scenarios { scenarios } => {
                let mut best: Option<(f64, usize)> = None;
                for (i, s) in scenarios.iter().enumerate() {
                    let v: f64 = p
                        .iter()
                        .zip(&s.density)
                        .zip(x)
                        .map(|((p, z), x)| -p * z * x)
                        .sum::<f64>()
                        - s.penalty;
                    if best.is_none_or(|(b, _)| v > b) {
                        best = Some((v, i));
                    }
                }
                let (value, i) = best.expect("validated non-empty");
                let q: Vec<f64> = p.iter().zip(&scenarios[i].density).map(|(p, z)| p * z).collect();
                Ok(RiskEvaluation {
                    value,
                    maximizer: TerminalMeasure::new(q)?,
                })
            }
            Self::AverageValueAtRisk { beta } => {
                let q = avar_maximizer(x, p, *beta);
                let value = q.iter().zip(x).map(|(q, x)| -q * x).sum();
                Ok(RiskEvaluation {
                    value,
                    maximizer: TerminalMeasure::from_weights(&q)?,
                })
            }
            Self::Entropic { gamma } => {
                // Shift by the largest exponent before exponentiating.
                let w: Vec<f64> = x.iter().map(|x| -gamma * x).collect();
                let top = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = p.iter().zip(&w).map(|(p, w)| p * (w - top).exp()).collect();
                let total: f64 = weights.iter().sum();
                let value = (top + total.ln()) / gamma;
                let q: Vec<f64> = weights.iter().map(|v| v / total).collect();
                Ok(RiskEvaluation {
                    value,
                    maximizer: TerminalMeasure::from_weights(&q)?,
                })
            }
        }
    }

    /// Minimal penalty `alpha_min(Q)`; `+inf` outside the dual domain.
    pub fn penalty(&self, q: &TerminalMeasure, reference: &TerminalMeasure) -> Result<f64> {
        self.validate(reference)?;
        check_len(reference.len(), q.len())?;
        let p = reference.probabilities();
        let q = q.probabilities();
        match self {
            Self::Scenarios { scenarios } => {
                // Lower convex envelope: cheapest mixture of scenarios equal to Q.
                let k = scenarios.len();
                let mut lp = LinearProgram::minimize(scenarios.iter().map(|s| s.penalty).collect());
                for leaf in 0..p.len() {
                    let coeffs = scenarios.iter().map(|s| p[leaf] * s.density[leaf]).collect();
                    lp.add_constraint(coeffs, Relation::Eq, q[leaf]);
                }
                lp.add_constraint(vec![1.0; k], Relation::Eq, 1.0);
                let sol = lp.solve()?;
                match sol.status {
                    LpStatus::Optimal => Ok(sol.objective.max(0.0)),
                    LpStatus::Infeasible => Ok(f64::INFINITY),
                    status => Err(crate::lp::LpError::NotOptimal(status).into()),
                }
            }
            Self::AverageValueAtRisk { beta } => {
                let cap = 1.0 / beta;
                let inside = q.iter().zip(p).all(|(q, p)| q / p <= cap + 1e-9);
                Ok(if inside { 0.0 } else { f64::INFINITY })
            }
            Self::Entropic { gamma } => {
                let entropy: f64 = q
                    .iter()
                    .zip(p)
                    .filter(|(q, _)| **q > 0.0)
                    .map(|(q, p)| q * (q / p).ln())
                    .sum();
                Ok(entropy.max(0.0) / gamma)
            }
        }
    }

    /// `rho(X) <= 1e-9`.
    pub fn is_acceptable(&self, x: &[f64], reference: &TerminalMeasure) -> Result<bool> {
        Ok(self.evaluate(x, reference)?.value <= 1e-9)
    }
}

fn bad(field: &'static str, reason: impl Into<String>) -> HedgeError {
    HedgeError::Invalid {
        field,
        node: None,
        reason: reason.into(),
    }
}

/// Fills the density cap `1 / beta` on the largest losses first; ties go to
/// the lower leaf position.
fn avar_maximizer(x: &[f64], p: &[f64], beta: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let mut q = vec![0.0; x.len()];
    let mut remaining = 1.0_f64;
    for i in order {
        if remaining <= 0.0 {
            break;
        }
        let take = (p[i] / beta).min(remaining);
        q[i] = take;
        remaining -= take;
    }
    q
}

/// Rockafellar-Uryasev form `min_s { s + E_P[(-X - s)^+] / beta }`. The
/// minimum is attained at one of the losses `-X`, so the search is finite.
pub fn avar_primal(x: &[f64], reference: &TerminalMeasure, beta: f64) -> f64 {
    let p = reference.probabilities();
    x.iter()
        .map(|&s| {
            let s = -s;
            s + p
                .iter()
                .zip(x)
                .map(|(p, x)| p * (-x - s).max(0.0))
                .sum::<f64>()
                / beta
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxiomFailure {
    pub axiom: &'static str,
    pub trial: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub inputs: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxiomReport {
    pub trials: usize,
    pub failures: Vec<AxiomFailure>,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Randomized check of monotonicity, the translation property and convexity,
/// each at tolerance `1e-9`.
pub fn axiom_harness(
    rm: &RiskMeasure,
    reference: &TerminalMeasure,
    trials: usize,
    seed: u64,
) -> Result<AxiomReport> {
    const TOL: f64 = 1e-9;
    rm.validate(reference)?;
    let n = reference.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for trial in 0..trials.max(1) {
        let x2: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x1: Vec<f64> = x2.iter().map(|v| v + rng.gen_range(0.0..1.0)).collect();
        let c: f64 = rng.gen_range(-3.0..3.0);
        let lambda: f64 = rng.gen_range(0.0..1.0);
        let r1 = rm.evaluate(&x1, reference)?.value;
        let r2 = rm.evaluate(&x2, reference)?.value;

        if r1 > r2 + TOL {
            failures.push(AxiomFailure {
                axiom: "monotonicity",
                trial,
                lhs: r1,
                rhs: r2,
                inputs: vec![x1.clone(), x2.clone()],
            });
        }

        let shifted: Vec<f64> = x2.iter().map(|v| v + c).collect();
        let rs = rm.evaluate(&shifted, reference)?.value;
        if (rs - (r2 - c)).abs() > TOL {
            failures.push(AxiomFailure {
                axiom: "translation",
                trial,
                lhs: rs,
                rhs: r2 - c,
                inputs: vec![x2.clone(), vec![c]],
            });
        }

        // Independent second position for the convexity check.
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let ry = rm.evaluate(&y, reference)?.value;
        let mix: Vec<f64> = x1
            .iter()
            .zip(&y)
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect();
        let rm_mix = rm.evaluate(&mix, reference)?.value;
        let bound = lambda * r1 + (1.0 - lambda) * ry;
        if rm_mix > bound + TOL {
            failures.push(AxiomFailure {
                axiom: "convexity",
                trial,
                lhs: rm_mix,
                rhs: bound,
                inputs: vec![x1, y, vec![lambda]],
            });
        }
    }
    Ok(AxiomReport {
        trials: trials.max(1),
        failures,
    })
}
