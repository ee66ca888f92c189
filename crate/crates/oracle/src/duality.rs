use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{check_len, Result};

/// `sum_w (H_w Q_w - H_w sum_k y_k q^k_w)^+ + budget sum_k y_k`, the inner
/// dual objective written with measures instead of densities.
pub fn dual_objective(q: &[f64], vertices: &[Vec<f64>], claim: &[f64], budget: f64, weights: &[f64]) -> Result<f64> {
    check_len(claim.len(), q.len())?;
    check_len(vertices.len(), weights.len())?;
    let mut total = budget * weights.iter().sum::<f64>();
    for w in 0..claim.len() {
        let level: f64 = vertices.iter().zip(weights).map(|(v, y)| y * v[w]).sum();
        total += (claim[w] * q[w] - claim[w] * level).max(0.0);
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakDualityReport {
    pub samples: usize,
    pub primal: f64,
    /// Smallest `dual objective - primal` seen.
    pub min_margin: f64,
    /// Samples whose objective fell below `primal - 1e-9`.
    pub violations: Vec<(usize, f64)>,
}

impl WeakDualityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Evaluates the dual objective at random nonnegative weights and checks
/// each against the inner primal value `primal`. Samples alternate between
/// dense weights, mass on a single vertex, and the zero vector.
pub fn weak_duality_sweep(
    q: &[f64],
    vertices: &[Vec<f64>],
    claim: &[f64],
    budget: f64,
    primal: f64,
    samples: usize,
    seed: u64,
) -> Result<WeakDualityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = vertices.len();
    let claim_value: f64 = q.iter().zip(claim).map(|(q, h)| q * h).sum();
    let scale = 2.0 * (claim_value / budget.max(1e-12)).max(1.0);
    let mut min_margin = f64::INFINITY;
    let mut violations = Vec::new();
    for i in 0..samples {
        let mut weights = vec![0.0; k];
        match i % 4 {
            0 | 1 if k > 0 => {
                for y in &mut weights {
                    *y = rng.gen_range(0.0..scale / k as f64);
                }
            }
            2 if k > 0 => weights[rng.gen_range(0..k)] = rng.gen_range(0.0..scale),
            _ => {}
        }
        let margin = dual_objective(q, vertices, claim, budget, &weights)? - primal;
        min_margin = min_margin.min(margin);
        if margin < -1e-9 {
            violations.push((i, margin));
        }
    }
    Ok(WeakDualityReport {
        samples,
        primal,
        min_margin,
        violations,
    })
}
