use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("solver failed: {msg} (last bracket [{lo}, {hi}])")]
    Solver { msg: String, lo: f64, hi: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for CLI use: 1 validation, 2 runtime/solver, 3 verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Dimension { .. } | Error::Config(_) => 1,
            Error::Solver { .. } | Error::NonFinite(_) | Error::Checkpoint(_) | Error::Io(_) => 2,
            Error::Verification(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
