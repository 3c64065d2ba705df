use std::io;

/// Errors produced by the nowcasting engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller supplied arguments outside an operation's domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Model or run configuration could not be parsed or is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or inconsistent data files.
    #[error("data error: {0}")]
    Data(String),

    /// A matrix factorization or sampler failed beyond recovery.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("not enough history: first feasible low-frequency index is {first_feasible}")]
    InsufficientHistory { first_feasible: usize },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
