use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the simulator, planner, learner and harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A value violated an operation's domain (empty input, bad sigma, id out of range, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A non-finite value was produced or supplied where finite values are required.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("format error: {0}")]
    Format(String),

    /// An operation was attempted on a session in the wrong lifecycle state.
    #[error("state error: {0}")]
    State(String),

    /// Fewer eligible items than the list length.
    #[error("infeasible mask: {eligible} eligible items for a list of {k}")]
    InfeasibleMask { eligible: usize, k: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors the CLI reports with the configuration exit code.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
