use thiserror::Error;

/// Errors raised by the optimization library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or model setup (empty dataset, bad step size, missing constants).
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke an operation's precondition (index out of range, dimension mismatch).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Non-finite input reached a numeric routine.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An iterate left the finite region or exceeded the divergence threshold.
    #[error("run diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: u64, reason: String },

    /// Malformed LIBSVM input.
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}
