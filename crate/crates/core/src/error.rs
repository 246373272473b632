use thiserror::Error;

/// Errors raised by the toolbox.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A linear solve failed at the given frequency.
    #[error("singular {what} at omega = {omega} rad/s")]
    Singular { what: &'static str, omega: f64 },

    #[error("matrix exponential argument too large (norm {norm:.3e} > {limit:.1e})")]
    ExpmRange { norm: f64, limit: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// The simulated output left the admissible envelope.
    #[error("simulation diverged at t = {time} s (|y| = {magnitude:.3e})")]
    Diverged { time: f64, magnitude: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("i/o: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(format!("line {} column {}: {e}", e.line(), e.column()))
    }
}
