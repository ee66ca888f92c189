use knockout::lp::LpStatus;
use knockout::market::TerminalMeasure;
use knockout::martingale::MartingaleConstraints;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{OracleError, Result};

/// Martingale measures from random linear objectives: each LP optimum is a
/// vertex, and every other sample is mixed with the previous point so that
/// edges and faces are covered too.
pub fn polytope_sampler(constraints: &MartingaleConstraints, samples: usize, seed: u64) -> Result<Vec<TerminalMeasure>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = constraints.num_leaves();
    let mut lp = constraints.feasibility_lp();
    let mut out: Vec<TerminalMeasure> = Vec::with_capacity(samples);
    for i in 0..samples {
        lp.objective = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sol = lp.solve().map_err(knockout::HedgeError::from)?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => return Err(OracleError::Infeasible),
            status => return Err(knockout::HedgeError::from(knockout::lp::LpError::NotOptimal(status)).into()),
        }
        let mut point: Vec<f64> = sol.x.iter().map(|x| x.max(0.0)).collect();
        if i % 2 == 1 {
            if let Some(prev) = out.last() {
                let t: f64 = rng.gen();
                for (p, q) in point.iter_mut().zip(prev.probabilities()) {
                    *p = t * *p + (1.0 - t) * q;
                }
            }
        }
        out.push(TerminalMeasure::from_weights(&point)?);
    }
    Ok(out)
}
