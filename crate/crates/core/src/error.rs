use thiserror::Error;

use crate::lp::LpError;
use crate::market::NodeId;

#[derive(Debug, Error)]
pub enum HedgeError {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid {field}{}: {reason}", node.map(|n| format!(" at node {n}")).unwrap_or_default())]
    Invalid {
        field: &'static str,
        node: Option<NodeId>,
        reason: String,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("reference measure not strictly positive (leaf {leaf}: {value})")]
    NotStrictlyPositive { leaf: NodeId, value: f64 },

    #[error("market admits arbitrage (best interior margin {margin:e})")]
    Arbitrage { margin: f64 },

    #[error("{leaves} leaves exceed the enumeration cap of {cap}")]
    CapExceeded { leaves: usize, cap: usize },

    #[error("martingale polytope is empty")]
    EmptyPolytope,

    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),

    #[error("calibration of the randomized test failed: {0}")]
    Calibration(String),

    #[error("certificate check failed ({check}): {detail}")]
    Certificate { check: &'static str, detail: String },
}

pub type Result<T, E = HedgeError> = std::result::Result<T, E>;
