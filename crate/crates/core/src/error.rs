use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulator, the experiment harness and the fitters.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("rank-deficient problem: {0}")]
    RankDeficient(String),

    #[error("infeasible injection rate: ln(r1) = {ln_r1} exceeds surface ceiling c = {c}")]
    InfeasibleRate { ln_r1: f64, c: f64 },

    #[error("invalid surface: {0}")]
    InvalidSurface(String),

    #[error("empty feasible range: {0}")]
    EmptyRange(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown key `{0}`")]
    UnknownKey(String),

    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("search failed: {0}")]
    SearchFailed(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
