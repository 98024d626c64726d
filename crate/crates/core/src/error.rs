//! Error type shared by every module of the crate.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model parameter `{field}`: {reason}")]
    InvalidModel { field: String, reason: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("refine grid: drift guard violated (alpha * hx = {product:.4} >= 1, alpha = {alpha}, hx = {hx})")]
    DriftGuard { alpha: f64, hx: f64, product: f64 },

    #[error("matrix is not a nonsingular M-matrix: nonpositive pivot {pivot:e} at row {row}")]
    Pivot { row: usize, pivot: f64 },

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e}, bracket width {bracket:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        bracket: f64,
    },

    #[error("eigenvector lost positivity at index {index} (value {value:e}); discretization too coarse")]
    Positivity { index: usize, value: f64 },

    #[error("oracle bisection bracket failure: mismatch {lo_value:e} at {lo} and {hi_value:e} at {hi}")]
    OracleBracket {
        lo: f64,
        hi: f64,
        lo_value: f64,
        hi_value: f64,
    },

    #[error("no minimizing bracket found for the speed ratio; extend the alpha range ({0})")]
    SpeedBracket(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("alpha = {alpha} is not below alpha* = {alpha_star}; use c_star")]
    UseCStar { alpha: f64, alpha_star: f64 },

    #[error("time step {dt} exceeds the admissible bound {bound}")]
    TimeStep { dt: f64, bound: f64 },

    #[error("front reached the window edge at t = {time}")]
    WindowTooSmall { time: f64 },

    #[error("stationary iteration did not settle by t = {time} (time-derivative norm {rate:e})")]
    StationaryStalled { time: f64, rate: f64 },

    #[error("non-uniqueness alarm: from-below and from-above states differ by {gap:e} (limit {limit:e})")]
    NonUnique { gap: f64, limit: f64 },
}

impl Error {
    pub(crate) fn model(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidModel {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}
