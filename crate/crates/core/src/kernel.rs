//! Squared-exponential correlation with per-dimension lengthscales:
//! `k(x, x') = exp(-Σ_k (x_k - x'_k)² / θ_k)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

/// Lengthscales dividing squared coordinate distances. A single entry is
/// applied isotropically to every input column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    theta: Vec<f64>,
}

impl KernelParams {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::DimensionMismatch("at least one lengthscale is required".into()));
        }
        for (index, &value) in theta.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::InvalidLengthscale { index, value });
            }
        }
        Ok(KernelParams { theta })
    }

    pub fn isotropic(theta: f64) -> Result<Self> {
        Self::new(vec![theta])
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    fn inverse_for(&self, p: usize) -> Result<Vec<f64>> {
        match self.theta.len() {
            1 => Ok(vec![1.0 / self.theta[0]; p]),
            k if k == p => Ok(self.theta.iter().map(|t| 1.0 / t).collect()),
            k => Err(Error::DimensionMismatch(format!(
                "{k} lengthscales for {p} input columns"
            ))),
        }
    }
}

#[inline]
fn scaled_sq_dist(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize, inv: &[f64]) -> f64 {
    inv.iter()
        .enumerate()
        .map(|(k, w)| {
            let d = a[(i, k)] - b[(j, k)];
            d * d * w
        })
        .sum()
}

/// Correlation matrix among the rows of `x` (n × p). Unit diagonal.
pub fn sq_exp_cov(x: &DMatrix<f64>, params: &KernelParams) -> Result<SymMatrix> {
    let inv = params.inverse_for(x.ncols())?;
    Ok(SymMatrix::from_fn(x.nrows(), |i, j| {
        if i == j {
            1.0
        } else {
            (-scaled_sq_dist(x, i, x, j, &inv)).exp()
        }
    }))
}

/// Cross-correlation between rows of `x1` (n × p) and `x2` (m × p).
pub fn sq_exp_cross(x1: &DMatrix<f64>, x2: &DMatrix<f64>, params: &KernelParams) -> Result<DMatrix<f64>> {
    if x1.ncols() != x2.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "inputs have {} and {} columns",
            x1.ncols(),
            x2.ncols()
        )));
    }
    let inv = params.inverse_for(x1.ncols())?;
    Ok(DMatrix::from_fn(x1.nrows(), x2.nrows(), |i, j| {
        (-scaled_sq_dist(x1, i, x2, j, &inv)).exp()
    }))
}

/// Correlation matrix of 1-d points.
pub fn sq_exp_cov_1d(x: &[f64], theta: f64) -> Result<SymMatrix> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::InvalidLengthscale { index: 0, value: theta });
    }
    Ok(SymMatrix::from_fn(x.len(), |i, j| {
        if i == j {
            1.0
        } else {
            let d = x[i] - x[j];
            (-d * d / theta).exp()
        }
    }))
}
