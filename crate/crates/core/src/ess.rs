//! Elliptical slice sampling for latent vectors with a zero-mean Gaussian prior.
//!
//! Random numbers are consumed in a fixed order: the prior draw, the
//! log-threshold uniform, the initial angle, then one uniform per shrink.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, mvn_sample, CholFactor, JitterPolicy, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EssConfig {
    pub max_shrinks: usize,
}

impl Default for EssConfig {
    fn default() -> Self {
        EssConfig { max_shrinks: 100 }
    }
}

/// Result of one ESS update.
#[derive(Debug, Clone)]
pub struct EssStep {
    pub z: DVector<f64>,
    /// Log-likelihood at the accepted state.
    pub loglik: f64,
    /// Number of rejected proposals before acceptance.
    pub shrinks: usize,
    /// Accepted angle; combine companion vectors as `prev·cos + prior·sin`.
    pub angle: f64,
}

/// One ESS update when the log-likelihood at `z_prev` is already known.
pub fn ess_update_with<R, F>(
    z_prev: &DVector<f64>,
    loglik_prev: f64,
    z_prior: &DVector<f64>,
    mut loglik: F,
    rng: &mut R,
    cfg: &EssConfig,
) -> Result<EssStep>
where
    R: Rng + ?Sized,
    F: FnMut(&DVector<f64>) -> f64,
{
    let threshold = loglik_prev + rng.random::<f64>().ln();
    let mut angle = rng.random::<f64>() * 2.0 * PI;
    let (mut lo, mut hi) = (angle - 2.0 * PI, angle);
    let mut shrinks = 0;
    loop {
        let z = z_prev * angle.cos() + z_prior * angle.sin();
        let ll = loglik(&z);
        if ll > threshold {
            return Ok(EssStep { z, loglik: ll, shrinks, angle });
        }
        shrinks += 1;
        if shrinks >= cfg.max_shrinks {
            return Err(Error::ShrinkLimitExceeded(cfg.max_shrinks));
        }
        if angle < 0.0 {
            lo = angle;
        } else {
            hi = angle;
        }
        angle = lo + rng.random::<f64>() * (hi - lo);
    }
}

/// One ESS update of `z_prev` under prior `N(0, L Lᵀ)`.
pub fn ess_update<R, F>(
    z_prev: &DVector<f64>,
    prior_chol: &CholFactor,
    mut loglik: F,
    rng: &mut R,
    cfg: &EssConfig,
) -> Result<EssStep>
where
    R: Rng + ?Sized,
    F: FnMut(&DVector<f64>) -> f64,
{
    let current = loglik(z_prev);
    let z_prior = mvn_sample(prior_chol, rng);
    ess_update_with(z_prev, current, &z_prior, loglik, rng, cfg)
}

/// Factor of the stacked train/test prior, reusable across draws.
#[derive(Debug, Clone)]
pub struct JointPrior {
    chol: CholFactor,
    n_train: usize,
}

impl JointPrior {
    pub fn new(train_cov: &SymMatrix, cross_cov: &DMatrix<f64>, test_cov: &SymMatrix) -> Result<Self> {
        let n = train_cov.dim();
        let m = test_cov.dim();
        if cross_cov.nrows() != n || cross_cov.ncols() != m {
            return Err(Error::DimensionMismatch(format!(
                "cross covariance is {}x{}, expected {n}x{m}",
                cross_cov.nrows(),
                cross_cov.ncols()
            )));
        }
        let joint = SymMatrix::from_fn(n + m, |i, j| match (i < n, j < n) {
            (true, true) => train_cov.as_matrix()[(i, j)],
            (true, false) => cross_cov[(i, j - n)],
            (false, true) => cross_cov[(j, i - n)],
            (false, false) => test_cov.as_matrix()[(i - n, j - n)],
        });
        let chol = cholesky(&joint, &JitterPolicy::noise_free())?;
        Ok(JointPrior { chol, n_train: n })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (DVector<f64>, DVector<f64>) {
        let z = mvn_sample(&self.chol, rng);
        let n = self.n_train;
        let m = z.len() - n;
        (z.rows(0, n).into_owned(), z.rows(n, m).into_owned())
    }
}

/// A single draw from the stacked train/test prior, split into its two parts.
pub fn joint_prior_draw<R: Rng + ?Sized>(
    train_cov: &SymMatrix,
    cross_cov: &DMatrix<f64>,
    test_cov: &SymMatrix,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>)> {
    Ok(JointPrior::new(train_cov, cross_cov, test_cov)?.draw(rng))
}
