//! Monotone additive GP regression.
//!
//! Each input column j owns a latent Gaussian vector on a shared reference grid
//! with lengthscale θ_j. The vector is mapped to a monotone image on [0, 1],
//! interpolated to the data, and scaled by an amplitude ν_j > 0:
//!
//! ```text
//! y_i = μ + Σ_j ν_j (f_ij − ½) + ε_i,   ε_i ~ N(0, σ²)
//! ```
//!
//! μ and σ² are integrated out under a 1/σ² reference prior, so the sampler
//! only moves the latent vectors (elliptical slice sampling) and (ν, θ)
//! (Metropolis with Uniform[x/2, 2x] proposals).
//!
//! One sweep updates latents for j ascending, then every ν_j, then every θ_j.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ess::{ess_update_with, EssConfig};
use crate::kernel::sq_exp_cov_1d;
use crate::linalg::{cholesky, mvn_logpdf, mvn_sample, CholFactor, JitterPolicy};
use crate::refinterp::{fo_approx_init, fo_approx_into, transform, InterpPlan, RefGrid, Variant};

/// Gamma(shape, rate) priors on each ν_j and θ_j.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub alpha_nu: f64,
    pub beta_nu: f64,
    pub alpha_theta: f64,
    pub beta_theta: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig { alpha_nu: 1e-3, beta_nu: 1e-3, alpha_theta: 1.5, beta_theta: 5.0 }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha_nu", self.alpha_nu),
            ("beta_nu", self.beta_nu),
            ("alpha_theta", self.alpha_theta),
            ("beta_theta", self.beta_theta),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Unnormalized Gamma(shape, rate) log-density; constants cancel in every ratio we take.
pub(crate) fn log_gamma_kernel(x: f64, shape: f64, rate: f64) -> f64 {
    (shape - 1.0) * x.ln() - rate * x
}

/// Draws `x' ~ Uniform[x/2, 2x]`; the matching Hastings correction is `ln x − ln x'`.
pub(crate) fn propose_scale<R: Rng + ?Sized>(x: f64, rng: &mut R) -> f64 {
    x / 2.0 + rng.random::<f64>() * 1.5 * x
}

/// Run length, burn-in, thinning and reference-grid settings for one chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub total: usize,
    pub burn: usize,
    pub thin: usize,
    pub n_g: usize,
    pub seed: u64,
    pub variant: Variant,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig { total: 5000, burn: 1000, thin: 10, n_g: 50, seed: 0, variant: Variant::Exp }
    }
}

impl McmcConfig {
    /// The longer run used for the deep-GP family.
    pub fn deep_default() -> Self {
        McmcConfig { total: 10_000, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn >= self.total {
            return Err(Error::Config(format!(
                "burn ({}) must be smaller than total ({})",
                self.burn, self.total
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.n_g < 2 {
            return Err(Error::Config("n_g must be at least 2".into()));
        }
        Ok(())
    }

    /// Number of draws kept: ⌊(total − burn) / thin⌋.
    pub fn retained_count(&self) -> usize {
        (self.total - self.burn) / self.thin
    }

    pub(crate) fn keeps(&self, iteration: usize) -> bool {
        iteration > self.burn && (iteration - self.burn).is_multiple_of(self.thin)
    }
}

/// Profiled residual location and scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mu_hat: f64,
    pub s2: f64,
}

fn check_shapes(y: &[f64], f_n: &DMatrix<f64>, nu: &[f64]) -> Result<(usize, usize)> {
    let (n, p) = (y.len(), nu.len());
    if f_n.nrows() != n || f_n.ncols() != p {
        return Err(Error::DimensionMismatch(format!(
            "latent matrix is {}x{}, expected {n}x{p}",
            f_n.nrows(),
            f_n.ncols()
        )));
    }
    if n <= p {
        return Err(Error::TooFewObservations { n, p });
    }
    Ok((n, p))
}

fn stats_from_residuals(r: &[f64], p: usize) -> SummaryStats {
    let n = r.len();
    let mu_hat = r.iter().sum::<f64>() / n as f64;
    let ss: f64 = r.iter().map(|v| (v - mu_hat) * (v - mu_hat)).sum();
    SummaryStats { mu_hat, s2: ss / (n - p) as f64 }
}

/// μ̂ and s² for responses `y`, latent values `f_n` (n × p) and amplitudes `nu`.
pub fn summary_stats(y: &[f64], f_n: &DMatrix<f64>, nu: &[f64]) -> Result<SummaryStats> {
    let (n, p) = check_shapes(y, f_n, nu)?;
    let r: Vec<f64> = (0..n)
        .map(|i| y[i] - (0..p).map(|j| nu[j] * (f_n[(i, j)] - 0.5)).sum::<f64>())
        .collect();
    Ok(stats_from_residuals(&r, p))
}

fn marglik_from_s2(s2: f64, dof: usize) -> Result<f64> {
    if !(s2 >= 1e-300) {
        return Err(Error::DegenerateResiduals(s2));
    }
    let d = dof as f64;
    Ok(-0.5 * d * (d * s2 / 2.0).ln())
}

/// Log of the collapsed marginal likelihood, up to a constant depending only on (n, p).
pub fn log_marglik(y: &[f64], f_n: &DMatrix<f64>, nu: &[f64]) -> Result<f64> {
    let (n, p) = check_shapes(y, f_n, nu)?;
    marglik_from_s2(summary_stats(y, f_n, nu)?.s2, n - p)
}

/// One retained state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonoDraw {
    /// One latent grid vector per input column.
    pub z_g: Vec<Vec<f64>>,
    pub nu: Vec<f64>,
    pub theta: Vec<f64>,
    pub mu_hat: f64,
    pub s2: f64,
}

/// Acceptance and mixing statistics gathered over the whole run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MonoDiagnostics {
    pub nu_accept_rate: Vec<f64>,
    pub theta_accept_rate: Vec<f64>,
    pub mean_shrinks: Vec<f64>,
    pub theta_nonpd_rejections: usize,
    /// Log marginal likelihood after every sweep.
    pub loglik_trace: Vec<f64>,
}

/// Retained draws from a mono-GP fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonoChain {
    pub n: usize,
    pub p: usize,
    pub grid: RefGrid,
    pub variant: Variant,
    pub draws: Vec<MonoDraw>,
    pub diagnostics: MonoDiagnostics,
}

impl MonoChain {
    /// Student-t degrees of freedom, n − p.
    pub fn dof(&self) -> usize {
        self.n - self.p
    }
}

/// Sampler state for one chain. The step methods are public so that single
/// Gibbs components can be exercised in isolation.
pub struct MonoGpSampler {
    y: Vec<f64>,
    p: usize,
    grid: RefGrid,
    variant: Variant,
    plans: Vec<InterpPlan>,
    prior: PriorConfig,
    ess: EssConfig,
    z_g: Vec<DVector<f64>>,
    f_n: DMatrix<f64>,
    nu: Vec<f64>,
    theta: Vec<f64>,
    chol: Vec<CholFactor>,
    loglik: f64,
    nu_accepts: Vec<usize>,
    theta_accepts: Vec<usize>,
    shrinks: Vec<usize>,
    steps: usize,
    theta_nonpd: usize,
}

const INIT_NU: f64 = 1.0;
const INIT_THETA: f64 = 0.1;

impl MonoGpSampler {
    /// Starts from z_g = 0 (the uniform ramp), ν_j = 1, θ_j = 0.1.
    pub fn new(x: &DMatrix<f64>, y: &[f64], grid: RefGrid, variant: Variant, prior: PriorConfig) -> Result<Self> {
        let (n, p) = (x.nrows(), x.ncols());
        if y.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: y.len() });
        }
        if n <= p {
            return Err(Error::TooFewObservations { n, p });
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteResponse(i));
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config("training inputs must be coded to [0, 1]".into()));
        }
        prior.validate()?;
        let plans = (0..p)
            .map(|j| fo_approx_init(&grid, x.column(j).as_slice()))
            .collect::<Result<Vec<_>>>()?;
        let n_g = grid.len();
        let z_g = vec![DVector::zeros(n_g); p];
        let theta = vec![INIT_THETA; p];
        let chol = theta
            .iter()
            .map(|&t| prior_factor(&grid, t))
            .collect::<Result<Vec<_>>>()?;
        let mut s = MonoGpSampler {
            y: y.to_vec(),
            p,
            grid,
            variant,
            plans,
            prior,
            ess: EssConfig::default(),
            z_g,
            f_n: DMatrix::zeros(n, p),
            nu: vec![INIT_NU; p],
            theta,
            chol,
            loglik: 0.0,
            nu_accepts: vec![0; p],
            theta_accepts: vec![0; p],
            shrinks: vec![0; p],
            steps: 0,
            theta_nonpd: 0,
        };
        for j in 0..p {
            let col = s.latent_at_data(j, &s.z_g[j].clone())?;
            s.f_n.set_column(j, &DVector::from_vec(col));
        }
        s.loglik = log_marglik(&s.y, &s.f_n, &s.nu)?;
        Ok(s)
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn z_g(&self, j: usize) -> &DVector<f64> {
        &self.z_g[j]
    }

    pub fn f_n(&self) -> &DMatrix<f64> {
        &self.f_n
    }

    /// Current log marginal likelihood.
    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    pub fn set_nu(&mut self, nu: Vec<f64>) -> Result<()> {
        if nu.len() != self.p || nu.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("amplitudes must be positive, one per input".into()));
        }
        self.nu = nu;
        self.loglik = log_marglik(&self.y, &self.f_n, &self.nu)?;
        Ok(())
    }

    pub fn set_ess_config(&mut self, cfg: EssConfig) {
        self.ess = cfg;
    }

    fn latent_at_data(&self, j: usize, z: &DVector<f64>) -> Result<Vec<f64>> {
        let image = transform(z.as_slice(), self.variant)?;
        let mut out = vec![0.0; self.y.len()];
        fo_approx_into(&self.plans[j], image.values(), &mut out)?;
        Ok(out)
    }

    /// Responses with every column except `j` removed.
    fn partial_residual(&self, j: usize) -> Vec<f64> {
        (0..self.y.len())
            .map(|i| {
                self.y[i]
                    - (0..self.p)
                        .filter(|&k| k != j)
                        .map(|k| self.nu[k] * (self.f_n[(i, k)] - 0.5))
                        .sum::<f64>()
            })
            .collect()
    }

    /// One elliptical slice update of latent column `j`; returns the number of shrinks.
    pub fn ess_latent_step<R: Rng + ?Sized>(&mut self, j: usize, rng: &mut R) -> Result<usize> {
        let base = self.partial_residual(j);
        let nu_j = self.nu[j];
        let dof = self.y.len() - self.p;
        let z_prior = mvn_sample(&self.chol[j], rng);
        let mut scratch = vec![0.0; self.y.len()];
        let plan = &self.plans[j];
        let variant = self.variant;
        let p = self.p;
        let mut loglik = |z: &DVector<f64>| -> f64 {
            let Ok(image) = transform(z.as_slice(), variant) else {
                return f64::NEG_INFINITY;
            };
            if fo_approx_into(plan, image.values(), &mut scratch).is_err() {
                return f64::NEG_INFINITY;
            }
            let r: Vec<f64> = base.iter().zip(&scratch).map(|(b, f)| b - nu_j * (f - 0.5)).collect();
            marglik_from_s2(stats_from_residuals(&r, p).s2, dof).unwrap_or(f64::NEG_INFINITY)
        };
        let step = ess_update_with(&self.z_g[j], self.loglik, &z_prior, &mut loglik, rng, &self.ess)?;
        let col = self.latent_at_data(j, &step.z)?;
        self.f_n.set_column(j, &DVector::from_vec(col));
        self.z_g[j] = step.z;
        self.loglik = step.loglik;
        self.shrinks[j] += step.shrinks;
        Ok(step.shrinks)
    }

    /// Metropolis update of ν_j; returns whether the proposal was accepted.
    pub fn mh_step_nu<R: Rng + ?Sized>(&mut self, j: usize, rng: &mut R) -> Result<bool> {
        let old = self.nu[j];
        let prop = propose_scale(old, rng);
        let mut nu = self.nu.clone();
        nu[j] = prop;
        let ll_prop = match log_marglik(&self.y, &self.f_n, &nu) {
            Ok(v) => v,
            Err(Error::DegenerateResiduals(_)) => f64::NEG_INFINITY,
            Err(e) => return Err(e),
        };
        let log_alpha = ll_prop - self.loglik
            + log_gamma_kernel(prop, self.prior.alpha_nu, self.prior.beta_nu)
            - log_gamma_kernel(old, self.prior.alpha_nu, self.prior.beta_nu)
            + old.ln()
            - prop.ln();
        let accept = rng.random::<f64>().ln() < log_alpha;
        if accept {
            self.nu = nu;
            self.loglik = ll_prop;
            self.nu_accepts[j] += 1;
        }
        Ok(accept)
    }

    /// Metropolis update of θ_j against the Gaussian density of latent column `j`.
    /// Proposals whose correlation matrix cannot be factored are rejected.
    pub fn mh_step_theta<R: Rng + ?Sized>(&mut self, j: usize, rng: &mut R) -> Result<bool> {
        let old = self.theta[j];
        let prop = propose_scale(old, rng);
        let u: f64 = rng.random();
        let chol_prop = match prior_factor(&self.grid, prop) {
            Ok(c) => c,
            Err(Error::NotPositiveDefinite { .. }) => {
                log::debug!("theta proposal {prop} rejected: correlation matrix not factorizable");
                self.theta_nonpd += 1;
                return Ok(false);
            }
            Err(e) => return Err(e),
        };
        let z = &self.z_g[j];
        let log_alpha = mvn_logpdf(z, &chol_prop) - mvn_logpdf(z, &self.chol[j])
            + log_gamma_kernel(prop, self.prior.alpha_theta, self.prior.beta_theta)
            - log_gamma_kernel(old, self.prior.alpha_theta, self.prior.beta_theta)
            + old.ln()
            - prop.ln();
        let accept = u.ln() < log_alpha;
        if accept {
            self.theta[j] = prop;
            self.chol[j] = chol_prop;
            self.theta_accepts[j] += 1;
        }
        Ok(accept)
    }

    /// One full Gibbs sweep.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        for j in 0..self.p {
            self.ess_latent_step(j, rng)?;
        }
        for j in 0..self.p {
            self.mh_step_nu(j, rng)?;
        }
        for j in 0..self.p {
            self.mh_step_theta(j, rng)?;
        }
        self.steps += 1;
        Ok(())
    }

    pub fn summary(&self) -> Result<SummaryStats> {
        summary_stats(&self.y, &self.f_n, &self.nu)
    }

    pub fn snapshot(&self) -> Result<MonoDraw> {
        let s = self.summary()?;
        Ok(MonoDraw {
            z_g: self.z_g.iter().map(|z| z.as_slice().to_vec()).collect(),
            nu: self.nu.clone(),
            theta: self.theta.clone(),
            mu_hat: s.mu_hat,
            s2: s.s2,
        })
    }

    fn diagnostics(&self, loglik_trace: Vec<f64>) -> MonoDiagnostics {
        let steps = self.steps.max(1) as f64;
        MonoDiagnostics {
            nu_accept_rate: self.nu_accepts.iter().map(|&a| a as f64 / steps).collect(),
            theta_accept_rate: self.theta_accepts.iter().map(|&a| a as f64 / steps).collect(),
            mean_shrinks: self.shrinks.iter().map(|&a| a as f64 / steps).collect(),
            theta_nonpd_rejections: self.theta_nonpd,
            loglik_trace,
        }
    }
}

fn prior_factor(grid: &RefGrid, theta: f64) -> Result<CholFactor> {
    cholesky(&sq_exp_cov_1d(grid.nodes(), theta)?, &JitterPolicy::noise_free())
}

/// Runs the sampler on inputs `x` (n × p, coded to [0, 1]) and responses `y`.
pub fn fit(x: &DMatrix<f64>, y: &[f64], prior: &PriorConfig, mcmc: &McmcConfig) -> Result<MonoChain> {
    mcmc.validate()?;
    let grid = RefGrid::uniform(mcmc.n_g)?;
    let mut sampler = MonoGpSampler::new(x, y, grid.clone(), mcmc.variant, *prior)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mcmc.seed);
    let mut draws = Vec::with_capacity(mcmc.retained_count());
    let mut trace = Vec::with_capacity(mcmc.total);
    for t in 1..=mcmc.total {
        sampler.sweep(&mut rng)?;
        trace.push(sampler.loglik());
        if mcmc.keeps(t) {
            draws.push(sampler.snapshot()?);
        }
    }
    Ok(MonoChain {
        n: y.len(),
        p: x.ncols(),
        grid,
        variant: mcmc.variant,
        diagnostics: sampler.diagnostics(trace),
        draws,
    })
}

/// Single-input convenience wrapper around [`fit`].
pub fn fit_1d(x: &[f64], y: &[f64], prior: &PriorConfig, mcmc: &McmcConfig) -> Result<MonoChain> {
    fit(&DMatrix::from_column_slice(x.len(), 1, x), y, prior, mcmc)
}

/// Location-scale Student-t parameters for one retained draw. The scale is
/// shared by every test location (diagonal structure).
#[derive(Debug, Clone, PartialEq)]
pub struct StudentTParams {
    pub location: Vec<f64>,
    pub scale2: f64,
    pub dof: usize,
}

/// Aggregated predictive moments.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSummary {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub cov: Option<DMatrix<f64>>,
    /// Student-t degrees of freedom; `None` for Gaussian predictives.
    pub dof: Option<usize>,
}

fn test_plans(chain: &MonoChain, xstar: &DMatrix<f64>) -> Result<Vec<InterpPlan>> {
    if xstar.ncols() != chain.p {
        return Err(Error::DimensionMismatch(format!(
            "test inputs have {} columns, chain was fit with {}",
            xstar.ncols(),
            chain.p
        )));
    }
    (0..chain.p)
        .map(|j| fo_approx_init(&chain.grid, xstar.column(j).as_slice()))
        .collect()
}

/// ν_j (F_j(x*) − ½) for every coordinate j of one draw, as an n' × p matrix.
fn draw_components(draw: &MonoDraw, plans: &[InterpPlan], variant: Variant, m: usize) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(m, plans.len());
    let mut buf = vec![0.0; m];
    for (j, plan) in plans.iter().enumerate() {
        let image = transform(&draw.z_g[j], variant)?;
        fo_approx_into(plan, image.values(), &mut buf)?;
        for (i, f) in buf.iter().enumerate() {
            out[(i, j)] = draw.nu[j] * (f - 0.5);
        }
    }
    Ok(out)
}

fn draw_locations(chain: &MonoChain, xstar: &DMatrix<f64>) -> Result<Vec<Vec<f64>>> {
    let plans = test_plans(chain, xstar)?;
    let m = xstar.nrows();
    chain
        .draws
        .par_iter()
        .map(|d| {
            let comps = draw_components(d, &plans, chain.variant, m)?;
            Ok((0..m).map(|i| d.mu_hat + comps.row(i).sum()).collect())
        })
        .collect()
}

/// Per-draw Student-t predictive parameters at `xstar`.
pub fn predict_samples(chain: &MonoChain, xstar: &DMatrix<f64>) -> Result<Vec<StudentTParams>> {
    let dof = chain.dof();
    if dof < 2 {
        return Err(Error::DofTooSmall(dof));
    }
    if chain.draws.is_empty() {
        return Err(Error::EmptyChain);
    }
    let inflate = 1.0 + 1.0 / chain.n as f64;
    let locs = draw_locations(chain, xstar)?;
    Ok(locs
        .into_iter()
        .zip(&chain.draws)
        .map(|(location, d)| StudentTParams { location, scale2: inflate * d.s2, dof })
        .collect())
}

/// Student-t variance inflation (n − p)/(n − p − 2).
pub fn variance_inflation(n: usize, p: usize) -> Result<f64> {
    if n < p + 3 {
        return Err(Error::DofTooSmall(n.saturating_sub(p)));
    }
    let d = (n - p) as f64;
    Ok(d / (d - 2.0))
}

/// Moment aggregates over draws: the mean of per-draw locations, and the
/// between-draw covariance of locations plus the average residual variance
/// times the Student-t inflation.
pub fn predict_moments(chain: &MonoChain, xstar: &DMatrix<f64>, full_cov: bool) -> Result<PredictiveSummary> {
    let inflation = variance_inflation(chain.n, chain.p)?;
    if chain.draws.is_empty() {
        return Err(Error::EmptyChain);
    }
    let locs = draw_locations(chain, xstar)?;
    let avg_s2 = chain.draws.iter().map(|d| d.s2).sum::<f64>() / chain.draws.len() as f64;
    let (mean, mut var, cov) = location_moments(&locs, xstar.nrows(), full_cov);
    let within = avg_s2 * inflation;
    for v in var.iter_mut() {
        *v += within;
    }
    let cov = cov.map(|mut c| {
        for i in 0..c.nrows() {
            c[(i, i)] += within;
        }
        c
    });
    Ok(PredictiveSummary { mean, var, cov, dof: Some(chain.dof()) })
}

/// Mean, pointwise variance and optional covariance of per-draw vectors, with
/// divisor T − 1 (zero spread for a single draw). Reduction order is fixed.
pub(crate) fn location_moments(
    locs: &[Vec<f64>],
    m: usize,
    full_cov: bool,
) -> (Vec<f64>, Vec<f64>, Option<DMatrix<f64>>) {
    let t = locs.len();
    let mut mean = vec![0.0; m];
    for l in locs {
        for (a, v) in mean.iter_mut().zip(l) {
            *a += v;
        }
    }
    for a in mean.iter_mut() {
        *a /= t as f64;
    }
    let denom = if t > 1 { (t - 1) as f64 } else { 1.0 };
    let mut var = vec![0.0; m];
    for l in locs {
        for i in 0..m {
            let d = l[i] - mean[i];
            var[i] += d * d;
        }
    }
    for v in var.iter_mut() {
        *v /= denom;
    }
    let cov = full_cov.then(|| {
        let mut c = DMatrix::zeros(m, m);
        for l in locs {
            let d = DVector::from_iterator(m, l.iter().zip(&mean).map(|(a, b)| a - b));
            c.ger(1.0, &d, &d, 1.0);
        }
        c / denom
    });
    (mean, var, cov)
}

/// Posterior mean of ν_j F_j(x*) per coordinate: one column per input.
pub fn latent_component_means(chain: &MonoChain, xstar: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if chain.draws.is_empty() {
        return Err(Error::EmptyChain);
    }
    let plans = test_plans(chain, xstar)?;
    let m = xstar.nrows();
    let per_draw = chain
        .draws
        .par_iter()
        .map(|d| {
            let mut c = draw_components(d, &plans, chain.variant, m)?;
            // shift back from the centred form: ν_j (F − ½) + ν_j / 2
            for j in 0..chain.p {
                c.column_mut(j).add_scalar_mut(0.5 * d.nu[j]);
            }
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut acc = DMatrix::zeros(m, chain.p);
    for c in &per_draw {
        acc += c;
    }
    Ok(acc / per_draw.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logistic_data(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        use rand_distr::StandardNormal;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let y = x
            .iter()
            .map(|&v| {
                let e: f64 = rng.sample(StandardNormal);
                10.0 / (1.0 + (-(10.0 * v - 5.0)).exp()) + e
            })
            .collect();
        (x, y)
    }

    #[test]
    fn summary_without_amplitude() {
        let y = [0.0, 1.0];
        let f = DMatrix::from_column_slice(2, 1, &[0.2, 0.9]);
        let s = summary_stats(&y, &f, &[0.0]).unwrap();
        assert_eq!(s.mu_hat, 0.5);
        assert_eq!(s.s2, 0.5);
        let lm = log_marglik(&y, &f, &[0.0]).unwrap();
        assert!((lm - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn summary_scale_free_is_sample_variance() {
        let y = [1.0, 4.0, 2.0, 7.0, 3.0];
        let f = DMatrix::from_fn(5, 2, |i, j| (i + j) as f64 / 7.0);
        let s = summary_stats(&y, &f, &[0.0, 0.0]).unwrap();
        let ybar = 17.0 / 5.0;
        let ss: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
        assert!((s.mu_hat - ybar).abs() < 1e-14);
        assert!((s.s2 - ss / 3.0).abs() < 1e-13);
    }

    #[test]
    fn too_few_observations() {
        let f = DMatrix::zeros(2, 2);
        assert_eq!(
            summary_stats(&[1.0, 2.0], &f, &[1.0, 1.0]),
            Err(Error::TooFewObservations { n: 2, p: 2 })
        );
    }

    #[test]
    fn residual_doubling_shifts_loglik() {
        let y = [0.3, -1.0, 2.2, 0.7];
        let f = DMatrix::from_column_slice(4, 1, &[0.0, 0.3, 0.6, 1.0]);
        let a = log_marglik(&y, &f, &[2.0]).unwrap();
        let y2: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let b = log_marglik(&y2, &f, &[4.0]).unwrap();
        assert!((b - a + 3.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn perfect_fit_is_degenerate() {
        let f = DMatrix::from_column_slice(3, 1, &[0.0, 0.5, 1.0]);
        let y = [-1.0, 0.0, 1.0];
        assert!(matches!(log_marglik(&y, &f, &[2.0]), Err(Error::DegenerateResiduals(_))));
    }

    #[test]
    fn duplicated_column_nests_single_input() {
        let y = [1.0, 3.0, 2.0, 5.0, 4.0, 6.5];
        let f1 = DMatrix::from_column_slice(6, 1, &[0.0, 0.1, 0.3, 0.6, 0.8, 1.0]);
        let s1 = summary_stats(&y, &f1, &[3.0]).unwrap();
        // second coordinate with zero amplitude contributes nothing but one dof
        let f2 = DMatrix::from_fn(6, 2, |i, j| if j == 0 { f1[(i, 0)] } else { 0.5 });
        let s2 = summary_stats(&y, &f2, &[3.0, 0.0]).unwrap();
        assert_eq!(s1.mu_hat, s2.mu_hat);
        assert!((s1.s2 * 5.0 - s2.s2 * 4.0).abs() < 1e-12);
    }

    #[test]
    fn retained_count_arithmetic() {
        let m = McmcConfig::default();
        assert_eq!(m.retained_count(), 400);
        assert_eq!(McmcConfig::deep_default().retained_count(), 900);
        let odd = McmcConfig { total: 57, burn: 10, thin: 4, ..m };
        assert_eq!((1..=57).filter(|&t| odd.keeps(t)).count(), odd.retained_count());
        assert!(McmcConfig { burn: 5000, ..m }.validate().is_err());
        assert!(McmcConfig { thin: 0, ..m }.validate().is_err());
    }

    #[test]
    fn flat_likelihood_accepts_immediately() {
        let (x, y) = logistic_data(20, 1);
        let xm = DMatrix::from_column_slice(20, 1, &x);
        let mut s = MonoGpSampler::new(&xm, &y, RefGrid::uniform(50).unwrap(), Variant::Exp, PriorConfig::default())
            .unwrap();
        // ν is tiny relative to the residual scale: likelihood numerically flat in z
        s.set_nu(vec![1e-12]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            assert_eq!(s.ess_latent_step(0, &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn initial_state_is_deterministic() {
        let (x, y) = logistic_data(20, 2);
        let xm = DMatrix::from_column_slice(20, 1, &x);
        let make = || {
            let mut s =
                MonoGpSampler::new(&xm, &y, RefGrid::uniform(50).unwrap(), Variant::Exp, PriorConfig::default())
                    .unwrap();
            assert_eq!(s.nu(), &[1.0]);
            assert_eq!(s.theta(), &[0.1]);
            assert!(s.z_g(0).iter().all(|v| *v == 0.0));
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            s.sweep(&mut rng).unwrap();
            s.snapshot().unwrap()
        };
        assert_eq!(make(), make());
    }

    #[test]
    fn theta_step_with_zero_latent_uses_determinant_only() {
        let (x, y) = logistic_data(20, 4);
        let xm = DMatrix::from_column_slice(20, 1, &x);
        let grid = RefGrid::uniform(50).unwrap();
        let mut s = MonoGpSampler::new(&xm, &y, grid.clone(), Variant::Exp, PriorConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut replay = rng.clone();
        let accepted = s.mh_step_theta(0, &mut rng).unwrap();
        // replay the proposal and acceptance draw
        let prop = propose_scale(0.1, &mut replay);
        let u: f64 = replay.random();
        let a = prior_factor(&grid, prop).unwrap();
        let b = prior_factor(&grid, 0.1).unwrap();
        let z = DVector::zeros(50);
        let det_only = -0.5 * a.log_det() + 0.5 * b.log_det();
        assert!((mvn_logpdf(&z, &a) - mvn_logpdf(&z, &b) - det_only).abs() < 1e-9);
        let pr = PriorConfig::default();
        let log_alpha = det_only + log_gamma_kernel(prop, pr.alpha_theta, pr.beta_theta)
            - log_gamma_kernel(0.1, pr.alpha_theta, pr.beta_theta)
            + 0.1f64.ln()
            - prop.ln();
        assert_eq!(accepted, u.ln() < log_alpha);
    }

    #[test]
    fn prediction_identities() {
        let grid = RefGrid::uniform(50).unwrap();
        let draw = MonoDraw { z_g: vec![vec![0.0; 50]], nu: vec![4.0], theta: vec![0.1], mu_hat: 1.5, s2: 0.8 };
        let chain = MonoChain {
            n: 5,
            p: 1,
            grid: grid.clone(),
            variant: Variant::Exp,
            draws: vec![draw],
            diagnostics: MonoDiagnostics::default(),
        };
        let xs = DMatrix::from_column_slice(50, 1, grid.nodes());
        let samples = predict_samples(&chain, &xs).unwrap();
        for (i, loc) in samples[0].location.iter().enumerate() {
            let ramp = i as f64 / 49.0;
            assert!((loc - (1.5 + 4.0 * (ramp - 0.5))).abs() < 1e-12);
        }
        assert!((samples[0].scale2 - 1.2 * 0.8).abs() < 1e-15);
        assert_eq!(variance_inflation(5, 1).unwrap(), 2.0);

        let summ = predict_moments(&chain, &xs, true).unwrap();
        assert_eq!(summ.mean, samples[0].location);
        let cov = summ.cov.unwrap();
        for i in 0..50 {
            assert!((summ.var[i] - 1.6).abs() < 1e-12);
            for j in 0..50 {
                let expect = if i == j { 1.6 } else { 0.0 };
                assert!((cov[(i, j)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dof_guards() {
        let grid = RefGrid::uniform(5).unwrap();
        let draw = MonoDraw { z_g: vec![vec![0.0; 5]], nu: vec![1.0], theta: vec![0.1], mu_hat: 0.0, s2: 1.0 };
        let chain = MonoChain {
            n: 3,
            p: 1,
            grid,
            variant: Variant::Exp,
            draws: vec![draw],
            diagnostics: MonoDiagnostics::default(),
        };
        let xs = DMatrix::from_column_slice(1, 1, &[0.5]);
        assert!(predict_samples(&chain, &xs).is_ok());
        assert_eq!(predict_moments(&chain, &xs, false), Err(Error::DofTooSmall(2)));
        let bad = DMatrix::zeros(1, 2);
        assert!(matches!(predict_samples(&chain, &bad), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn identical_draws_have_no_between_spread() {
        let locs = vec![vec![1.0, 2.0], vec![1.0, 2.0]];
        let (mean, var, cov) = location_moments(&locs, 2, true);
        assert_eq!(mean, vec![1.0, 2.0]);
        assert_eq!(var, vec![0.0, 0.0]);
        assert_eq!(cov.unwrap(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn fit_rejects_bad_input() {
        let x = DMatrix::from_column_slice(3, 1, &[0.0, 0.5, 1.0]);
        let short = McmcConfig { total: 20, burn: 10, thin: 1, ..McmcConfig::default() };
        assert_eq!(
            fit(&x, &[1.0, f64::NAN, 2.0], &PriorConfig::default(), &short),
            Err(Error::NonFiniteResponse(1))
        );
        let wide = DMatrix::from_column_slice(3, 1, &[0.0, 0.5, 1.5]);
        assert!(fit(&wide, &[1.0, 2.0, 3.0], &PriorConfig::default(), &short).is_err());
    }
}
