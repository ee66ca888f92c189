use knockout::risk::RiskMeasure;

/// `rho(X)` from the defining formula of each variant. `p` is the reference
/// measure.
///
/// * scenarios: `max_i E_P[-X Z_i] - alpha_i`
/// * AVaR: `min_s s + E_P[(-X - s)^+] / beta`, minimized over the atoms of `-X`
/// * entropic: `ln E_P[exp(-gamma X)] / gamma`
pub fn risk_value(rm: &RiskMeasure, x: &[f64], p: &[f64]) -> f64 {
    match rm {
        RiskMeasure::Scenarios { scenarios } => scenarios
            .iter()
            .map(|s| {
                let loss: f64 = (0..x.len()).map(|w| -x[w] * p[w] * s.density[w]).sum();
                loss - s.penalty
            })
            .fold(f64::NEG_INFINITY, f64::max),
        RiskMeasure::AverageValueAtRisk { beta } => {
            let mut best = f64::INFINITY;
            for s in x.iter().map(|v| -v) {
                let tail: f64 = (0..x.len()).map(|w| p[w] * (-x[w] - s).max(0.0)).sum();
                best = best.min(s + tail / beta);
            }
            best
        }
        RiskMeasure::Entropic { gamma } => {
            let shift = x.iter().map(|v| -gamma * v).fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = (0..x.len()).map(|w| p[w] * (-gamma * x[w] - shift).exp()).sum();
            (shift + sum.ln()) / gamma
        }
    }
}

/// Zero-penalty scenario sets and AVaR are positively homogeneous.
pub fn is_coherent(rm: &RiskMeasure) -> bool {
    match rm {
        RiskMeasure::Scenarios { scenarios } => scenarios.iter().all(|s| s.penalty == 0.0),
        RiskMeasure::AverageValueAtRisk { .. } => true,
        RiskMeasure::Entropic { .. } => false,
    }
}

/// Bound `L` with `|rho((phi - 1) H) - rho((psi - 1) H)| <= L max_w |phi_w - psi_w|`
/// for `psi <= phi`: `rho(-H)` for coherent measures (subadditivity and
/// homogeneity), `max H` otherwise (monotonicity and cash invariance).
pub fn lipschitz_bound(rm: &RiskMeasure, claim: &[f64], p: &[f64]) -> f64 {
    if is_coherent(rm) {
        let neg: Vec<f64> = claim.iter().map(|h| -h).collect();
        risk_value(rm, &neg, p).max(0.0)
    } else {
        claim.iter().copied().fold(0.0, f64::max)
    }
}
