#![allow(dead_code)]

use monogp::dgp::{outer_log_marglik, OuterHyper};
use monogp::kernel::{sq_exp_cov, sq_exp_cross, KernelParams};
use monogp::linalg::{cholesky, JitterPolicy};
use nalgebra::{DMatrix, DVector};

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log ∬ N(r | μ1, σ²I) σ⁻² dμ dσ²` by a trapezoid rule over μ and log σ².
pub fn log_double_integral(r: &[f64]) -> f64 {
    let n = r.len() as f64;
    let rbar = r.iter().sum::<f64>() / n;
    let ss: f64 = r.iter().map(|v| (v - rbar).powi(2)).sum();
    let sd = (ss / n).sqrt().max(1e-6);
    let (nm, nu) = (1601, 1601);
    let (mlo, mhi) = (rbar - 40.0 * sd, rbar + 40.0 * sd);
    let (ulo, uhi) = ((ss / n).ln() - 25.0, (ss / n).ln() + 25.0);
    let (dm, du) = ((mhi - mlo) / (nm - 1) as f64, (uhi - ulo) / (nu - 1) as f64);
    let mut terms = Vec::with_capacity(nm * nu);
    for a in 0..nm {
        let mu = mlo + a as f64 * dm;
        let q = ss + n * (mu - rbar).powi(2);
        let wa = if a == 0 || a == nm - 1 { 0.5 } else { 1.0 };
        for b in 0..nu {
            let u = ulo + b as f64 * du;
            let wb = if b == 0 || b == nu - 1 { 0.5 } else { 1.0 };
            // dσ² = e^u du cancels one σ⁻²
            let log_f = -0.5 * n * (2.0 * std::f64::consts::PI).ln() - 0.5 * n * u - q / (2.0 * u.exp());
            terms.push(log_f + (wa * wb * dm * du).ln());
        }
    }
    log_sum_exp(&terms)
}

/// `log ∫ N(y | 0, τ²K) τ⁻² dτ²` by a trapezoid rule over log τ².
pub fn log_tau_integral(y: &[f64], k: &DMatrix<f64>) -> f64 {
    let n = y.len() as f64;
    let chol = k.clone().cholesky().expect("positive definite");
    let yv = DVector::from_column_slice(y);
    let quad = yv.dot(&chol.solve(&yv));
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let centre = (quad / n).ln();
    let nu = 20001;
    let (ulo, uhi) = (centre - 30.0, centre + 30.0);
    let du = (uhi - ulo) / (nu - 1) as f64;
    let terms: Vec<f64> = (0..nu)
        .map(|b| {
            let u = ulo + b as f64 * du;
            let w = if b == 0 || b == nu - 1 { 0.5 } else { 1.0 };
            let log_f = -0.5 * n * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det - 0.5 * n * u - quad / (2.0 * u.exp());
            log_f + (w * du).ln()
        })
        .collect();
    log_sum_exp(&terms)
}

/// Kriging mean of a stationary GP whose isotropic lengthscale and nugget
/// maximize the profiled marginal likelihood over a log-spaced grid.
pub fn gp_oracle_mean(x: &DMatrix<f64>, y: &[f64], xs: &DMatrix<f64>) -> Vec<f64> {
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for a in 0..41 {
        let theta = 10f64.powf(-3.0 + a as f64 * 0.1);
        for b in 0..41 {
            let g = 10f64.powf(-6.0 + b as f64 * 0.15);
            let hyp = OuterHyper { theta_y: vec![theta], g };
            if let Ok(l) = outer_log_marglik(&yc, x, &hyp) {
                if l > best.0 {
                    best = (l, theta, g);
                }
            }
        }
    }
    let k = KernelParams::isotropic(best.1).unwrap();
    let mut cov = sq_exp_cov(x, &k).unwrap();
    cov.add_diagonal(best.2);
    let chol = cholesky(&cov, &JitterPolicy::escalating()).unwrap();
    let alpha = chol.solve(&DVector::from_column_slice(&yc));
    let cross = sq_exp_cross(x, xs, &k).unwrap();
    cross.tr_mul(&alpha).iter().map(|v| v + ybar).collect()
}

/// Sorted-sample KS distance against Uniform[0, 1).
pub fn ks_uniform(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max)
}

/// Naive interpolation: binary search each query, linear extrapolation off the ends.
pub fn naive_interp(grid: &[f64], vals: &[f64], q: f64) -> f64 {
    let n = grid.len();
    let k = if q <= grid[0] {
        0
    } else if q >= grid[n - 1] {
        n - 2
    } else {
        let (mut lo, mut hi) = (0, n - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if grid[mid] <= q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let slope = (vals[k + 1] - vals[k]) / (grid[k + 1] - grid[k]);
    vals[k] + slope * (q - grid[k])
}

pub fn lag1_autocorrelation(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var: f64 = v.iter().map(|x| (x - m).powi(2)).sum();
    let cov: f64 = v.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    cov / var
}

pub fn logistic_grid(k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(k, 1, |i, _| i as f64 / (k - 1) as f64)
}
