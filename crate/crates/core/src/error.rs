use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid spectral density: {0}")]
    InvalidSpectral(String),

    #[error("invalid preparation: {0}")]
    InvalidPreparation(String),

    #[error("resonance/pole at omega = {omega}: |denominator| = {magnitude:e}")]
    Pole { omega: f64, magnitude: f64 },

    #[error("pole scan failed: candidate poles at omega = {0:?}")]
    PoleScan(Vec<f64>),

    #[error("quadrature tolerance not reached: {0}")]
    Tolerance(String),

    #[error("logarithm branch cut crossed at omega = {omega}, xi = {xi}")]
    Branch { omega: f64, xi: Complex64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("evaluation budget exceeded: {0}")]
    Budget(String),

    #[error("oracle construction failed: {0}")]
    Oracle(String),

    #[error("internal consistency violated: {0}")]
    Consistency(String),
}

pub type Result<T> = std::result::Result<T, Error>;
