//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("positivity violation in {field} at cell {cell}: value {value:e}")]
    Positivity {
        field: &'static str,
        cell: usize,
        value: f64,
    },

    #[error("density {value:e} at cell {cell} exceeds the volume-filling cap 1/eps = {cap:e}")]
    VolumeFilling { cell: usize, value: f64, cap: f64 },

    #[error("non-finite value encountered at t = {t}")]
    NonFinite { t: f64 },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("configuration invalid:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("missing series: {0}")]
    MissingSeries(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("run halted at t = {t}: {reason}")]
    Halted {
        t: f64,
        reason: String,
        exit_code: i32,
    },
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidGrid(_)
            | Error::ShapeMismatch { .. }
            | Error::InvalidArgument(_)
            | Error::Unsupported(_)
            | Error::Config(_) => 2,
            Error::Positivity { .. }
            | Error::VolumeFilling { .. }
            | Error::NonFinite { .. }
            | Error::NoConvergence { .. }
            | Error::Invariant(_) => 3,
            Error::MissingSeries(_) | Error::Io(_) | Error::Json(_) | Error::Format(_) => 4,
            Error::Halted { exit_code, .. } => *exit_code,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
