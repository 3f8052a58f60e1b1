use thiserror::Error;

/// Errors raised by the model, simulator, statistics and bound routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("bad dimensions: {0}")]
    BadDimensions(String),
    #[error("rate matrix is not symmetric at ({i}, {j})")]
    NonSymmetricRates { i: usize, j: usize },
    #[error("off-diagonal rate at ({i}, {j}) must be positive")]
    NonPositiveOffDiagonalRate { i: usize, j: usize },
    #[error("diagonal rate at ({i}, {i}) must be zero")]
    NonZeroDiagonalRate { i: usize },
    #[error("exponent of agent {agent} for good {good} must be positive")]
    NonPositiveExponent { agent: usize, good: usize },
    #[error("endowment of agent {agent} for good {good} must be finite and non-negative")]
    NegativeEndowment { agent: usize, good: usize },
    #[error("total amount of good {good} must be positive")]
    ZeroTotalGood { good: usize },
    #[error("distribution parameter must be positive and finite, got {0}")]
    NonPositiveParameter(f64),
    #[error("an encounter needs two distinct agents, got {0} twice")]
    SameAgent(usize),
    #[error("agent index {index} out of range for {n_agents} agents")]
    IndexOutOfRange { index: usize, n_agents: usize },
    #[error("point is not on the simplex of total {total} (sum {sum})")]
    PointOffSimplex { sum: f64, total: f64 },
    #[error("state does not match the economy: {0}")]
    InvalidState(String),
    #[error("invalid simulation plan: {0}")]
    InvalidPlan(String),
    #[error("sample set is empty")]
    EmptySample,
    #[error("need at least {required} samples, got {got}")]
    TooFewSamples { got: usize, required: usize },
    #[error("degenerate distribution parameters: {0}")]
    DegenerateParameters(String),
    #[error("histogram binning mismatch: {0}")]
    BinningMismatch(String),
    #[error("exponent context does not support induction level {0}")]
    NonPositiveExponentContext(usize),
    #[error("numerical procedure did not converge: {0}")]
    NumericalNonConvergence(String),
    #[error("ensemble does not retain raw samples; rerun with sample retention enabled")]
    MissingSamples,
}

impl Error {
    /// Path of the configuration field responsible for a validation error,
    /// in `field[i][j]` notation.
    pub fn field_path(&self) -> Option<String> {
        match self {
            Error::NonSymmetricRates { i, j }
            | Error::NonPositiveOffDiagonalRate { i, j } => Some(format!("rates[{i}][{j}]")),
            Error::NonZeroDiagonalRate { i } => Some(format!("rates[{i}][{i}]")),
            Error::NonPositiveExponent { agent, good } => {
                Some(format!("exponents[{agent}][{good}]"))
            }
            Error::NegativeEndowment { agent, good } => {
                Some(format!("endowments[{agent}][{good}]"))
            }
            Error::ZeroTotalGood { good } => Some(format!("endowments[*][{good}]")),
            _ => None,
        }
    }

    /// True for errors caused by invalid user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::BadDimensions(_)
                | Error::NonSymmetricRates { .. }
                | Error::NonPositiveOffDiagonalRate { .. }
                | Error::NonZeroDiagonalRate { .. }
                | Error::NonPositiveExponent { .. }
                | Error::NegativeEndowment { .. }
                | Error::ZeroTotalGood { .. }
                | Error::InvalidState(_)
                | Error::InvalidPlan(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
