use thiserror::Error;

/// Errors produced by the simulation engine and its analysis tools.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An exit estimator ran out of its step budget before observing the
    /// requested number of exits. Signals an infeasible (or exponentially
    /// expensive) configuration rather than a bug.
    #[error(
        "exit budget exhausted: {steps} steps spent, {exits}/{requested} exits observed \
         (configuration is infeasible or exit times are too long for this budget)"
    )]
    ExitBudgetExhausted {
        steps: u64,
        exits: u64,
        requested: u64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
