//! Crate-wide error type.

use std::fmt;

#[derive(Debug)]
pub enum Error {
    /// A precondition on an argument was violated (bad range, bad count, ...).
    InvalidInput(String),
    /// Operands have incompatible dimensions.
    ShapeMismatch(String),
    /// An iterative routine failed to converge; carries the last estimate.
    Convergence { context: String, last_estimate: f64 },
    /// Training loss became non-finite.
    DivergentLoss { epoch: usize, batch: usize, loss: f64 },
    Io(std::io::Error),
    Json(serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::Convergence { context, last_estimate } => {
                write!(f, "no convergence in {context} (last estimate {last_estimate})")
            }
            Error::DivergentLoss { epoch, batch, loss } => {
                write!(f, "training loss diverged at epoch {epoch}, batch {batch}: {loss}")
            }
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Json(e) => write!(f, "json error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            Error::Json(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}
