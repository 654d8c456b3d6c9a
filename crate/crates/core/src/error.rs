use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("solver did not converge: {message} (residuals: {residuals:?})")]
    Solver { message: String, residuals: Vec<f64> },

    #[error("fixed-point iteration failed after {iterations} iterations, last relative change {residual:e}")]
    Iteration { iterations: usize, residual: f64 },

    #[error("stability: {0}")]
    Stability(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain(format!("{name} must be finite, got {v}")))
    }
}
