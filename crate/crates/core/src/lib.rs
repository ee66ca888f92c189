//! Budget-constrained hedging of a contingent claim in a finite, incomplete
//! market under a convex risk measure.
//!
//! The optimal strategy superhedges a modified claim `phi H`, where the
//! randomized test `phi` minimizes `rho((phi - 1) H)` among tests whose
//! superhedging price fits the budget. The crate solves that static problem,
//! certifies it through the saddle point of its dual, and builds the strategy.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod certificate;
pub mod config;
pub mod error;
pub mod io;
pub mod lp;
pub mod market;
pub mod martingale;
pub mod np_test;
pub mod risk;
pub mod static_hedge;
pub mod superhedge;

pub use config::Tolerances;
pub use error::{HedgeError, Result};
