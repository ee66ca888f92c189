use serde::{Deserialize, Serialize};

/// Numerical tolerances shared by every solver stage.
///
/// The defaults are echoed verbatim into reports so that a stored run can be
/// re-checked with the same thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Primal/dual feasibility of LP solutions.
    pub feasibility: f64,
    /// Relative primal-dual objective gap of LP solutions.
    pub duality_gap: f64,
    /// Stopping gap of the cutting-plane method.
    pub kelley: f64,
    /// Zero-probability threshold for vertex feasibility and deduplication.
    pub vertex: f64,
    /// Relative width of the Neyman-Pearson equality set.
    pub equality: f64,
    /// Saddle-point and structure residuals.
    pub certificate: f64,
    /// Leaf cap for vertex enumeration.
    pub max_leaves: usize,
    /// Pivot budget per linear program.
    pub max_pivots: usize,
    /// Iteration budget of the cutting-plane method.
    pub max_kelley_iterations: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-9,
            duality_gap: 1e-8,
            kelley: 1e-6,
            vertex: 1e-9,
            equality: 1e-7,
            certificate: 1e-6,
            max_leaves: 24,
            max_pivots: 1_000_000,
            max_kelley_iterations: 5_000,
        }
    }
}
