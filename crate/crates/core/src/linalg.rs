//! Dense symmetric positive-definite machinery: jittered Cholesky, multivariate
//! normal sampling and log-density, and conditional (kriging) moments.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// A dense symmetric matrix. Entries `(i, j)` and `(j, i)` are bitwise equal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Builds a symmetric matrix by evaluating `f` once per unordered pair `i <= j`.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            for i in 0..=j {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    /// Wraps `m` after checking exact symmetry.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        for j in 0..m.ncols() {
            for i in 0..j {
                if m[(i, j)] != m[(j, i)] {
                    return Err(Error::DimensionMismatch(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(SymMatrix(m))
    }

    /// Averages `m` with its transpose.
    pub fn symmetrize(m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        SymMatrix::from_fn(n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn mean_diagonal(&self) -> f64 {
        let n = self.dim();
        if n == 0 {
            return 0.0;
        }
        self.0.diagonal().sum() / n as f64
    }

    /// Adds `value` to every diagonal entry.
    pub fn add_diagonal(&mut self, value: f64) {
        for i in 0..self.dim() {
            self.0[(i, i)] += value;
        }
    }
}

/// Jitter levels tried in order, each a multiple of the mean diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct JitterPolicy {
    pub levels: Vec<f64>,
}

impl JitterPolicy {
    /// Plain factorization first, then 1e-8, 1e-6, 1e-4 times the mean diagonal.
    pub fn escalating() -> Self {
        JitterPolicy { levels: vec![0.0, 1e-8, 1e-6, 1e-4] }
    }

    /// For noise-free correlation matrices on dense inputs: always jittered,
    /// so that numerically singular factors never slip through at level zero.
    pub fn noise_free() -> Self {
        JitterPolicy { levels: vec![1e-8, 1e-6, 1e-4] }
    }
}

impl Default for JitterPolicy {
    fn default() -> Self {
        Self::escalating()
    }
}

/// Lower Cholesky factor of `M + jitter_used * I`.
#[derive(Debug, Clone)]
pub struct CholFactor {
    lower: DMatrix<f64>,
    jitter_used: f64,
}

impl CholFactor {
    /// Wraps an already lower-triangular matrix with positive diagonal.
    pub fn from_lower(lower: DMatrix<f64>, jitter_used: f64) -> Self {
        CholFactor { lower, jitter_used }
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        self.lower
            .solve_lower_triangular(b)
            .expect("Cholesky diagonal is strictly positive")
    }

    /// Solves `L X = B` column by column.
    pub fn solve_lower_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.lower
            .solve_lower_triangular(b)
            .expect("Cholesky diagonal is strictly positive")
    }

    /// Solves `(L Lᵀ) x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let half = self.solve_lower(b);
        self.lower
            .tr_solve_lower_triangular(&half)
            .expect("Cholesky diagonal is strictly positive")
    }

    /// `bᵀ (L Lᵀ)⁻¹ b`.
    pub fn quad_form(&self, b: &DVector<f64>) -> f64 {
        self.solve_lower(b).norm_squared()
    }
}

/// Factorizes `m + jI` for the first jitter level `j` (relative to the mean
/// diagonal) at which the factorization succeeds.
pub fn cholesky(m: &SymMatrix, policy: &JitterPolicy) -> Result<CholFactor> {
    if m.dim() == 0 {
        return Err(Error::DimensionMismatch("cannot factor an empty matrix".into()));
    }
    let scale = m.mean_diagonal().abs().max(f64::MIN_POSITIVE);
    let mut last = 0.0;
    for &level in &policy.levels {
        let jitter = level * scale;
        last = jitter;
        let mut a = m.as_matrix().clone();
        if jitter > 0.0 {
            for i in 0..a.nrows() {
                a[(i, i)] += jitter;
            }
        }
        if let Some(ch) = Cholesky::new(a) {
            let lower = ch.unpack();
            if lower.diagonal().iter().all(|d| d.is_finite() && *d > 0.0) {
                return Ok(CholFactor { lower, jitter_used: jitter });
            }
        }
    }
    Err(Error::NotPositiveDefinite { jitter: last })
}

/// Draws `L z` with `z` a vector of independent standard normals taken from `rng` in order.
pub fn mvn_sample<R: Rng + ?Sized>(chol: &CholFactor, rng: &mut R) -> DVector<f64> {
    let n = chol.dim();
    let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    chol.lower() * z
}

/// Exact log-density of `N(0, L Lᵀ)` at `z`.
pub fn mvn_logpdf(z: &DVector<f64>, chol: &CholFactor) -> f64 {
    let n = chol.dim() as f64;
    -0.5 * chol.quad_form(z) - 0.5 * chol.log_det() - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// Conditional mean and covariance of a zero-mean Gaussian test block given
/// observed training values.
pub fn mvn_conditional(
    train_cov: &SymMatrix,
    cross_cov: &DMatrix<f64>,
    test_cov: &SymMatrix,
    train_values: &DVector<f64>,
) -> Result<(DVector<f64>, SymMatrix)> {
    let chol = cholesky(train_cov, &JitterPolicy::default())?;
    mvn_conditional_factored(&chol, cross_cov, test_cov, train_values)
}

/// As [`mvn_conditional`] with a precomputed factor of the training block.
pub fn mvn_conditional_factored(
    chol: &CholFactor,
    cross_cov: &DMatrix<f64>,
    test_cov: &SymMatrix,
    train_values: &DVector<f64>,
) -> Result<(DVector<f64>, SymMatrix)> {
    check_conformable(chol, cross_cov, test_cov.dim(), train_values)?;
    let a = chol.solve_lower_mat(cross_cov);
    let b = chol.solve_lower(train_values);
    let mean = a.tr_mul(&b);
    let raw = test_cov.as_matrix() - a.tr_mul(&a);
    let mut cov = SymMatrix::symmetrize(raw);
    for i in 0..cov.dim() {
        if cov.0[(i, i)] < 0.0 {
            cov.0[(i, i)] = 0.0;
        }
    }
    Ok((mean, cov))
}

/// Pointwise conditional moments: only the diagonal of the conditional
/// covariance is formed. `test_diag` holds the prior test variances.
pub fn kriging_pointwise(
    chol: &CholFactor,
    cross_cov: &DMatrix<f64>,
    test_diag: &DVector<f64>,
    train_values: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_conformable(chol, cross_cov, test_diag.len(), train_values)?;
    let a = chol.solve_lower_mat(cross_cov);
    let b = chol.solve_lower(train_values);
    let mean = a.tr_mul(&b);
    let var = DVector::from_iterator(
        test_diag.len(),
        a.column_iter()
            .zip(test_diag.iter())
            .map(|(col, d)| (d - col.norm_squared()).max(0.0)),
    );
    Ok((mean, var))
}

fn check_conformable(
    chol: &CholFactor,
    cross_cov: &DMatrix<f64>,
    test_dim: usize,
    train_values: &DVector<f64>,
) -> Result<()> {
    let n = chol.dim();
    if cross_cov.nrows() != n || train_values.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "training block is {n}-dimensional but cross covariance has {} rows and values {}",
            cross_cov.nrows(),
            train_values.len()
        )));
    }
    if cross_cov.ncols() != test_dim {
        return Err(Error::DimensionMismatch(format!(
            "cross covariance has {} columns, test block is {test_dim}",
            cross_cov.ncols()
        )));
    }
    Ok(())
}
