use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite {what} at x = {x:?}")]
    NonFinite { what: &'static str, x: Vec<f64> },

    #[error("path diverged (non-finite state) at step {step}")]
    Diverged { step: usize },

    #[error("empty time grid: n_steps must be positive")]
    EmptyGrid,

    #[error("length mismatch: {what} has length {got}, expected {expected}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("point (x = {x}, y = {y}) lies outside the solver grid")]
    OutOfDomain { x: f64, y: f64 },

    #[error("tridiagonal solve broke down at row {row}; retry with dt <= {suggested_dt:e}")]
    Tridiagonal { row: usize, suggested_dt: f64 },

    #[error("exponent {exponent} overflows in the Feynman-Kac functional")]
    Overflow { exponent: f64 },

    #[error("Hölder exponents violate 1/q1 + 1/q2 = 1/q (q = {q}, q1 = {q1}, q2 = {q2})")]
    Holder { q: f64, q1: f64, q2: f64 },

    #[error("convergence study aborted after {completed} horizon(s): {source}")]
    Study {
        completed: usize,
        partial: Box<crate::experiments::ConvergenceReport>,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
