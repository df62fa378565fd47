use thiserror::Error;

use crate::linsolve::SolveStats;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input that is admissible but has no meaningful answer for the
    /// requested operation (e.g. zero initial data for an upper solution).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("linear solver failed: {message} ({stats:?})")]
    SolverFailure { message: String, stats: SolveStats },

    #[error("time step failed at t = {time}: {reason}")]
    StepFailure {
        time: f64,
        reason: String,
        residual_history: Vec<f64>,
    },

    #[error("monotone iteration did not converge after {} outer iterations (last gap {:e})", gaps.len(), gaps.last().copied().unwrap_or(f64::NAN))]
    NonConvergence { gaps: Vec<f64> },

    #[error("dense oracle failed: {0}")]
    OracleFailure(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
