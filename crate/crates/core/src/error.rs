use std::path::PathBuf;

/// Errors raised by routing, graph maintenance, training and the verification lab.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("adjacency state is frozen")]
    Frozen,
    #[error("invalid state: {0}")]
    State(String),
    #[error("numerical failure: {message}")]
    Numerical { message: String, dump: String },
    #[error("training diverged: {message} (diagnostics in {})", .dump.display())]
    Divergence { message: String, dump: PathBuf },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}

pub(crate) fn arg_err(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}
