use thiserror::Error;

/// Errors surfaced by the library.
///
/// `Contract` marks a violated precondition (caller bug or bad input),
/// `Diverged` marks an iterative solver that hit its iteration cap, and
/// `Invariant` marks a recorded run that failed a trace check.
#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{what} did not converge after {iterations} iterations (last span {last_span:.6e})")]
    Diverged {
        what: &'static str,
        iterations: usize,
        last_span: f64,
    },

    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("transport error: {0}")]
    Transport(#[from] crate::transport::TransportError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }
}

/// Checks a precondition, returning `Error::Contract` when it fails.
macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !($cond) {
            return Err($crate::error::Error::Contract(format!($($arg)+)));
        }
    };
}

pub(crate) use ensure;
