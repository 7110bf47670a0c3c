//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid dimension or operand shape.
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    /// Shapes of two operands do not match.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Invalid parameter or configuration value (field-level message).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A numerical procedure failed (singular system, non-convergence,
    /// norm underflow, fit failure).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The Liouvillian null space has dimension > 1; the steady state is
    /// not unique and no representative is picked.
    #[error("steady state not unique: null space dimension {dimension}")]
    DegenerateSteadyState { dimension: usize },

    /// A dwell-time sweep has no dim/bright crossing in range. The boundary
    /// ratios t_dim/t_bright at the sweep ends are carried for diagnostics.
    #[error("no half-filling crossing in sweep (t_dim/t_bright: {ratio_low:.3e} at low end, {ratio_high:.3e} at high end)")]
    NoCrossing { ratio_low: f64, ratio_high: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for config/input errors, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_)
            | Error::DegenerateSteadyState { .. }
            | Error::NoCrossing { .. } => 3,
            _ => 2,
        }
    }
}
