//! Brute-force reference computations for the knockout solvers.
//!
//! Nothing here calls the solver crate's optimization routines. Risk values
//! come from their defining formulas, the static optimum from an exhaustive
//! grid search, and vertices of the martingale polytope from products of
//! one-step extreme measures. The crate only borrows plain data types (trees,
//! measures, risk configurations) and, for the sampler, the LP solver.

#![allow(clippy::needless_range_loop)]

mod duality;
mod grid;
pub mod instances;
mod risk;
mod sampler;
mod vertices;

pub use duality::{dual_objective, weak_duality_sweep, WeakDualityReport};
pub use grid::{grid_oracle_static, GridBracket, MAX_EFFECTIVE_LEAVES};
pub use risk::{is_coherent, lipschitz_bound, risk_value};
pub use sampler::polytope_sampler;
pub use vertices::{one_step_vertices, product_vertices};

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("{effective} leaves carry a positive payoff; the grid oracle handles at most {max}")]
    TooManyLeaves { effective: usize, max: usize },

    #[error("grid of {0} steps is too coarse (minimum 10)")]
    GridTooCoarse(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("no martingale measure exists")]
    Infeasible,

    #[error(transparent)]
    Core(#[from] knockout::HedgeError),
}

pub type Result<T> = std::result::Result<T, OracleError>;

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(OracleError::DimensionMismatch { expected, found })
    }
}
