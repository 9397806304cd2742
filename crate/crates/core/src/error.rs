//! Error taxonomy shared across the toolkit.
//!
//! `Config` covers construction-time validation (grids, parameter ranges),
//! `Domain` covers evaluation outside an operator's analyticity or
//! admissibility region, and `Numerical` covers iteration failures at
//! runtime (non-contracting Newton/Picard, blow-up, overflowing weights).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or construction parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// Requested evaluation lies outside the admissible domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative or quadrature procedure failed to meet its contract.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Gevrey weight exponent exceeded the floating-point range; shrink z
    /// or truncate the lattice.
    #[error("weight overflow: log-weight {log_weight:.3e} exceeds representable range")]
    WeightOverflow { log_weight: f64 },

    /// Series evaluation requested beyond the analyticity radius.
    #[error("analyticity radius exceeded: |argument| {arg:.6e} >= radius {radius:.6e}")]
    RadiusExceeded { arg: f64, radius: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
