//! Exact Gaussian dynamics of a quantum harmonic oscillator coupled to
//! several independent harmonic baths prepared in arbitrary Gaussian states.
//!
//! Units: ħ = k_B = 1.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod correlations;
pub mod error;
pub mod genfunc;
pub mod noise;
pub mod oracle;
pub mod oscillatory;
pub mod preparations;
pub mod quadrature;
pub mod scenario;
pub mod spectral;
pub mod transport;

pub use error::{Error, Result};

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
