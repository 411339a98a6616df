//! Monotone Gaussian process surrogates.
//!
//! * [`monogp`]: additive monotone GP regression with collapsed (μ, σ²).
//! * [`dgp`]: two-layer deep GPs, including monotone input warping, plus a
//!   one-layer GP comparator.
//! * [`bench`]: synthetic test functions, Latin hypercube designs, RMSE/CRPS
//!   and a Monte Carlo experiment runner.
//!
//! Lower layers: [`linalg`] (jittered Cholesky, Gaussian densities, kriging),
//! [`kernel`] (squared-exponential correlations), [`refinterp`] (reference
//! grid interpolation and the monotone transform) and [`ess`] (elliptical
//! slice sampling).

pub mod bench;
pub mod dgp;
pub mod error;
pub mod ess;
pub mod kernel;
pub mod linalg;
pub mod monogp;
pub mod refinterp;

pub use error::{Error, Result};
