use knockout::martingale::ArbitrageWitness;
use knockout::HedgeError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CHECK_FAILED: i32 = 1;
    pub const INVALID_INPUT: i32 = 2;
    pub const ARBITRAGE: i32 = 3;
    pub const SOLVER: i32 = 4;
    pub const GAP: i32 = 5;
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
    pub witness: Option<ArbitrageWitness>,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            witness: None,
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(exit::INVALID_INPUT, message)
    }

    pub fn arbitrage(margin: f64, witness: Option<ArbitrageWitness>) -> Self {
        Self {
            code: exit::ARBITRAGE,
            message: HedgeError::Arbitrage { margin }.to_string(),
            witness,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<HedgeError> for CliError {
    fn from(e: HedgeError) -> Self {
        let code = match &e {
            HedgeError::Parse(_)
            | HedgeError::Invalid { .. }
            | HedgeError::DimensionMismatch { .. }
            | HedgeError::NotStrictlyPositive { .. }
            | HedgeError::CapExceeded { .. } => exit::INVALID_INPUT,
            HedgeError::Arbitrage { .. } => exit::ARBITRAGE,
            HedgeError::Certificate { .. } => exit::GAP,
            HedgeError::EmptyPolytope | HedgeError::Lp(_) | HedgeError::Calibration(_) => exit::SOLVER,
        };
        Self::new(code, e.to_string())
    }
}

impl From<knockout_oracle::OracleError> for CliError {
    fn from(e: knockout_oracle::OracleError) -> Self {
        match e {
            knockout_oracle::OracleError::Core(inner) => inner.into(),
            knockout_oracle::OracleError::Infeasible => Self::new(exit::ARBITRAGE, e.to_string()),
            other => Self::invalid(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
