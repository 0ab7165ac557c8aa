use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulator and its solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range 1..={max} for {what}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        max: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("harmonic order is zero; time delays cannot realize phase shifts")]
    ZeroHarmonic,

    #[error("could not bracket the dual variable after {doublings} doublings (P(mu_up) = {power})")]
    InfeasibleBracket { doublings: usize, power: f64 },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("solver failed at outer iteration {iteration}: {source}")]
    Solver {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::Parse { .. } | Error::InvalidParameter(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
