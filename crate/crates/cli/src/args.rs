use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use knockout::Tolerances;

#[derive(Debug, Parser)]
#[command(name = "knockout", version, about = "Risk-minimizing partial hedges of contingent claims")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Superhedging price, attaining martingale measure and replicating strategy.
    Price(PriceArgs),
    /// Martingale constraints, no-arbitrage check and extreme measures.
    Polytope(PolytopeArgs),
    /// Full pipeline: static test, saddle certificate and dynamic strategy.
    Solve(SolveArgs),
    /// Re-check a stored solve report from its echoed inputs.
    Verify(VerifyArgs),
    /// Compare the solvers against brute-force references.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct PriceArgs {
    #[arg(long)]
    pub market: PathBuf,
    #[arg(long)]
    pub claim: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub tol: TolArgs,
}

#[derive(Debug, Args)]
pub struct PolytopeArgs {
    #[arg(long)]
    pub market: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub tol: TolArgs,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub market: PathBuf,
    #[arg(long)]
    pub claim: PathBuf,
    #[arg(long)]
    pub risk: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    pub budget: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Stop after the certificate.
    #[arg(long)]
    pub skip_hedge: bool,
    #[command(flatten)]
    pub tol: TolArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Report written by `solve`.
    pub report: PathBuf,
    /// Measure file; checks the inner problem and test at this measure instead.
    #[arg(long)]
    pub q: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub market: PathBuf,
    #[arg(long)]
    pub claim: PathBuf,
    #[arg(long)]
    pub risk: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    pub budget: f64,
    #[arg(long, default_value_t = 200)]
    pub grid: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random dual weights and polytope samples to draw.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub tol: TolArgs,
}

/// Overrides of the solver tolerances; unset flags keep the defaults.
#[derive(Debug, Default, Args)]
pub struct TolArgs {
    /// Leaf cap for vertex enumeration.
    #[arg(long)]
    pub max_leaves: Option<usize>,
    #[arg(long)]
    pub tol_feasibility: Option<f64>,
    #[arg(long)]
    pub tol_duality_gap: Option<f64>,
    #[arg(long)]
    pub tol_kelley: Option<f64>,
    #[arg(long)]
    pub tol_vertex: Option<f64>,
    #[arg(long)]
    pub tol_equality: Option<f64>,
    #[arg(long)]
    pub tol_certificate: Option<f64>,
    #[arg(long)]
    pub max_pivots: Option<usize>,
    #[arg(long)]
    pub max_kelley_iterations: Option<usize>,
}

impl TolArgs {
    pub fn resolve(&self) -> Tolerances {
        let d = Tolerances::default();
        Tolerances {
            feasibility: self.tol_feasibility.unwrap_or(d.feasibility),
            duality_gap: self.tol_duality_gap.unwrap_or(d.duality_gap),
            kelley: self.tol_kelley.unwrap_or(d.kelley),
            vertex: self.tol_vertex.unwrap_or(d.vertex),
            equality: self.tol_equality.unwrap_or(d.equality),
            certificate: self.tol_certificate.unwrap_or(d.certificate),
            max_leaves: self.max_leaves.unwrap_or(d.max_leaves),
            max_pivots: self.max_pivots.unwrap_or(d.max_pivots),
            max_kelley_iterations: self.max_kelley_iterations.unwrap_or(d.max_kelley_iterations),
        }
    }
}
