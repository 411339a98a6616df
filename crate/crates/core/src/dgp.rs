//! Two-layer deep GPs sharing one Metropolis-within-Gibbs engine.
//!
//! The outer layer is a zero-mean GP on warped inputs `W` with separable
//! lengthscales θ_y and nugget g; its scale τ² is integrated out under a 1/τ²
//! prior. Three warping layers are supported:
//!
//! * [`DeepModel::Gp`]: no warping (`W = X`), the one-layer comparator.
//! * [`DeepModel::MwDgp`]: each column `W_j = monoref(X_j)` from a latent grid
//!   vector, fixed location 0, amplitude 1 and no noise, so `W ∈ [0, 1]`.
//! * [`DeepModel::Dgp`]: each column `W_j ~ N(0, C(X; θ_w,j))` over the n
//!   training sites, unconstrained.
//!
//! A sweep updates warping columns by ESS (j ascending), then θ_w,j, then
//! θ_y,j, then g. Responses are centred before fitting and the mean is added
//! back at prediction time.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ess::{ess_update_with, EssConfig, JointPrior};
use crate::kernel::{sq_exp_cov, sq_exp_cov_1d, sq_exp_cross, KernelParams};
use crate::linalg::{cholesky, mvn_logpdf, mvn_sample, CholFactor, JitterPolicy, SymMatrix};
use crate::monogp::{
    location_moments, log_gamma_kernel, propose_scale, McmcConfig, PredictiveSummary, PriorConfig,
};
use crate::refinterp::{fo_approx_init, fo_approx_into, transform, InterpPlan, RefGrid, Variant};

/// Gamma(shape, rate) prior on the nugget.
pub const NUGGET_PRIOR: (f64, f64) = (1.5, 5.0);
/// Nugget proposals below this value are rejected.
pub const MIN_NUGGET: f64 = 1e-8;
const INIT_THETA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeepModel {
    Gp,
    MwDgp,
    Dgp,
}

/// Outer-layer lengthscales (one per warped column) and nugget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterHyper {
    pub theta_y: Vec<f64>,
    pub g: f64,
}

fn outer_factor(w: &DMatrix<f64>, hyp: &OuterHyper) -> Result<CholFactor> {
    let mut k = sq_exp_cov(w, &KernelParams::new(hyp.theta_y.clone())?)?;
    k.add_diagonal(hyp.g);
    cholesky(&k, &JitterPolicy::escalating())
}

fn outer_lml_factored(y: &DVector<f64>, chol: &CholFactor) -> f64 {
    let n = y.len() as f64;
    -0.5 * chol.log_det() - 0.5 * n * (chol.quad_form(y) / 2.0).ln()
}

/// τ²-profiled log marginal likelihood of the outer GP, constants dropped:
/// `−½ log|K| − (n/2) log(yᵀK⁻¹y / 2)` with `K = C_θy(W) + gI`.
pub fn outer_log_marglik(y: &[f64], w: &DMatrix<f64>, hyp: &OuterHyper) -> Result<f64> {
    if w.nrows() != y.len() {
        return Err(Error::LengthMismatch { expected: w.nrows(), got: y.len() });
    }
    let chol = outer_factor(w, hyp)?;
    Ok(outer_lml_factored(&DVector::from_column_slice(y), &chol))
}

/// Warping-layer part of one retained state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WarpDraw {
    Identity,
    Mono {
        z_g: Vec<Vec<f64>>,
        theta_w: Vec<f64>,
    },
    Free {
        /// Warped training inputs, n × p.
        w: DMatrix<f64>,
        theta_w: Vec<f64>,
        /// Warped values carried at fit-time test sites, if any.
        w_test: Option<DMatrix<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepDraw {
    pub warp: WarpDraw,
    pub outer: OuterHyper,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeepDiagnostics {
    pub theta_w_accept_rate: Vec<f64>,
    pub theta_y_accept_rate: Vec<f64>,
    pub g_accept_rate: f64,
    pub mean_shrinks: Vec<f64>,
    pub nonpd_rejections: usize,
    pub loglik_trace: Vec<f64>,
}

/// Retained draws from a GP-family fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepChain {
    pub model: DeepModel,
    /// Training inputs in [0, 1], n × p.
    pub x: DMatrix<f64>,
    /// Centred responses.
    pub y: Vec<f64>,
    pub y_center: f64,
    pub grid: Option<RefGrid>,
    pub variant: Variant,
    /// Test sites whose warping was carried through the sampler (unconstrained DGP only).
    pub test_sites: Option<DMatrix<f64>>,
    pub draws: Vec<DeepDraw>,
    pub diagnostics: DeepDiagnostics,
}

/// Extra knobs for the unconstrained DGP.
#[derive(Debug, Clone, Default)]
pub struct DgpOptions {
    /// Carry the warping at these sites through every ESS move using joint
    /// train/test prior draws. Without them, prediction krigs the warping.
    pub test_sites: Option<DMatrix<f64>>,
    /// Hold `W = X` fixed (no warping updates).
    pub frozen_warp: bool,
}

enum WarpState {
    Identity,
    Mono {
        grid: RefGrid,
        variant: Variant,
        plans: Vec<InterpPlan>,
        z_g: Vec<DVector<f64>>,
        theta_w: Vec<f64>,
        chol: Vec<CholFactor>,
    },
    Free {
        theta_w: Vec<f64>,
        chol: Vec<CholFactor>,
        joint: Option<FreeJoint>,
    },
}

struct FreeJoint {
    sites: DMatrix<f64>,
    priors: Vec<JointPrior>,
    w_test: DMatrix<f64>,
}

/// Sampler state for one GP-family chain.
pub struct DeepSampler {
    x: DMatrix<f64>,
    y: DVector<f64>,
    w: DMatrix<f64>,
    warp: WarpState,
    outer: OuterHyper,
    prior: PriorConfig,
    ess: EssConfig,
    loglik: f64,
    theta_w_acc: Vec<usize>,
    theta_y_acc: Vec<usize>,
    g_acc: usize,
    shrinks: Vec<usize>,
    nonpd: usize,
    steps: usize,
}

fn free_prior_factor(x: &DMatrix<f64>, theta: f64) -> Result<CholFactor> {
    cholesky(&sq_exp_cov(x, &KernelParams::isotropic(theta)?)?, &JitterPolicy::noise_free())
}

fn grid_prior_factor(grid: &RefGrid, theta: f64) -> Result<CholFactor> {
    cholesky(&sq_exp_cov_1d(grid.nodes(), theta)?, &JitterPolicy::noise_free())
}

fn free_joint_prior(x: &DMatrix<f64>, sites: &DMatrix<f64>, theta: f64) -> Result<JointPrior> {
    let k = KernelParams::isotropic(theta)?;
    JointPrior::new(&sq_exp_cov(x, &k)?, &sq_exp_cross(x, sites, &k)?, &sq_exp_cov(sites, &k)?)
}

fn validate_data(x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if y.len() != x.nrows() {
        return Err(Error::LengthMismatch { expected: x.nrows(), got: y.len() });
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteResponse(i));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("training inputs must be finite".into()));
    }
    Ok(())
}

fn is_nonpd(e: &Error) -> bool {
    matches!(e, Error::NotPositiveDefinite { .. })
}

impl DeepSampler {
    fn new(model: DeepModel, x: &DMatrix<f64>, y: &[f64], prior: PriorConfig, mcmc: &McmcConfig, opts: &DgpOptions) -> Result<Self> {
        validate_data(x, y)?;
        prior.validate()?;
        let (n, p) = (x.nrows(), x.ncols());
        let min_n = if model == DeepModel::Gp { 2 } else { 3 };
        if n < min_n {
            return Err(Error::TooFewObservations { n, p });
        }
        let mean = y.iter().sum::<f64>() / n as f64;
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - mean));
        let var = yc.norm_squared() / n as f64;
        let warp = match model {
            DeepModel::Gp => WarpState::Identity,
            DeepModel::Dgp if opts.frozen_warp => WarpState::Identity,
            DeepModel::MwDgp => {
                if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::Config("training inputs must be coded to [0, 1]".into()));
                }
                let grid = RefGrid::uniform(mcmc.n_g)?;
                let plans = (0..p)
                    .map(|j| fo_approx_init(&grid, x.column(j).as_slice()))
                    .collect::<Result<Vec<_>>>()?;
                let chol = vec![grid_prior_factor(&grid, INIT_THETA)?; p];
                WarpState::Mono {
                    z_g: vec![DVector::zeros(grid.len()); p],
                    grid,
                    variant: mcmc.variant,
                    plans,
                    theta_w: vec![INIT_THETA; p],
                    chol,
                }
            }
            DeepModel::Dgp => {
                let chol = vec![free_prior_factor(x, INIT_THETA)?; p];
                let joint = match &opts.test_sites {
                    Some(sites) => {
                        if sites.ncols() != p {
                            return Err(Error::DimensionMismatch(format!(
                                "test sites have {} columns, inputs have {p}",
                                sites.ncols()
                            )));
                        }
                        let jp = free_joint_prior(x, sites, INIT_THETA)?;
                        Some(FreeJoint { sites: sites.clone(), priors: vec![jp; p], w_test: sites.clone() })
                    }
                    None => None,
                };
                WarpState::Free { theta_w: vec![INIT_THETA; p], chol, joint }
            }
        };
        let mut s = DeepSampler {
            x: x.clone(),
            y: yc,
            w: x.clone(),
            warp,
            outer: OuterHyper { theta_y: vec![INIT_THETA; p], g: (0.01 * var).max(MIN_NUGGET) },
            prior,
            ess: EssConfig::default(),
            loglik: 0.0,
            theta_w_acc: vec![0; p],
            theta_y_acc: vec![0; p],
            g_acc: 0,
            shrinks: vec![0; p],
            nonpd: 0,
            steps: 0,
        };
        if let WarpState::Mono { plans, z_g, variant, .. } = &s.warp {
            for j in 0..p {
                let col = mono_column(&plans[j], &z_g[j], *variant)?;
                s.w.set_column(j, &col);
            }
        }
        s.loglik = outer_lml_factored(&s.y, &outer_factor(&s.w, &s.outer)?);
        Ok(s)
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    pub fn warped_inputs(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn outer(&self) -> &OuterHyper {
        &self.outer
    }

    fn lml_with(&self, w: &DMatrix<f64>, outer: &OuterHyper) -> Result<f64> {
        match outer_factor(w, outer) {
            Ok(ch) => Ok(outer_lml_factored(&self.y, &ch)),
            Err(e) if is_nonpd(&e) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        }
    }

    /// Elliptical slice update of warping column `j`.
    pub fn ess_warp_step<R: Rng + ?Sized>(&mut self, j: usize, rng: &mut R) -> Result<usize> {
        let mut w = self.w.clone();
        let y = &self.y;
        let outer = &self.outer;
        let eval = |w: &DMatrix<f64>| match outer_factor(w, outer) {
            Ok(ch) => outer_lml_factored(y, &ch),
            Err(_) => f64::NEG_INFINITY,
        };
        match &mut self.warp {
            WarpState::Identity => Ok(0),
            WarpState::Mono { plans, z_g, variant, chol, .. } => {
                let prior = mvn_sample(&chol[j], rng);
                let plan = &plans[j];
                let variant = *variant;
                let mut ll = |z: &DVector<f64>| match mono_column(plan, z, variant) {
                    Ok(col) => {
                        w.set_column(j, &col);
                        eval(&w)
                    }
                    Err(_) => f64::NEG_INFINITY,
                };
                let step = ess_update_with(&z_g[j], self.loglik, &prior, &mut ll, rng, &self.ess)?;
                let col = mono_column(plan, &step.z, variant)?;
                self.w.set_column(j, &col);
                z_g[j] = step.z;
                self.loglik = step.loglik;
                self.shrinks[j] += step.shrinks;
                Ok(step.shrinks)
            }
            WarpState::Free { chol, joint, .. } => {
                let (prior, prior_test) = match joint {
                    Some(jt) => {
                        let (a, b) = jt.priors[j].draw(rng);
                        (a, Some(b))
                    }
                    None => (mvn_sample(&chol[j], rng), None),
                };
                let current = self.w.column(j).into_owned();
                let mut ll = |col: &DVector<f64>| {
                    w.set_column(j, col);
                    eval(&w)
                };
                let step = ess_update_with(&current, self.loglik, &prior, &mut ll, rng, &self.ess)?;
                if let (Some(jt), Some(pt)) = (joint.as_mut(), prior_test) {
                    let prev = jt.w_test.column(j).into_owned();
                    let next = prev * step.angle.cos() + pt * step.angle.sin();
                    jt.w_test.set_column(j, &next);
                }
                self.w.set_column(j, &step.z);
                self.loglik = step.loglik;
                self.shrinks[j] += step.shrinks;
                Ok(step.shrinks)
            }
        }
    }

    /// Metropolis update of the warping lengthscale θ_w,j.
    pub fn mh_theta_w<R: Rng + ?Sized>(&mut self, j: usize, rng: &mut R) -> Result<bool> {
        let (a, b) = (self.prior.alpha_theta, self.prior.beta_theta);
        match &mut self.warp {
            WarpState::Identity => Ok(false),
            WarpState::Mono { grid, z_g, theta_w, chol, .. } => {
                let old = theta_w[j];
                let prop = propose_scale(old, rng);
                let u: f64 = rng.random();
                let cp = match grid_prior_factor(grid, prop) {
                    Ok(c) => c,
                    Err(e) if is_nonpd(&e) => {
                        self.nonpd += 1;
                        return Ok(false);
                    }
                    Err(e) => return Err(e),
                };
                let log_alpha = mvn_logpdf(&z_g[j], &cp) - mvn_logpdf(&z_g[j], &chol[j])
                    + log_gamma_kernel(prop, a, b)
                    - log_gamma_kernel(old, a, b)
                    + old.ln()
                    - prop.ln();
                let accept = u.ln() < log_alpha;
                if accept {
                    theta_w[j] = prop;
                    chol[j] = cp;
                    self.theta_w_acc[j] += 1;
                }
                Ok(accept)
            }
            WarpState::Free { theta_w, chol, joint } => {
                let old = theta_w[j];
                let prop = propose_scale(old, rng);
                let u: f64 = rng.random();
                let cp = match free_prior_factor(&self.x, prop) {
                    Ok(c) => c,
                    Err(e) if is_nonpd(&e) => {
                        self.nonpd += 1;
                        return Ok(false);
                    }
                    Err(e) => return Err(e),
                };
                let col = self.w.column(j).into_owned();
                let log_alpha = mvn_logpdf(&col, &cp) - mvn_logpdf(&col, &chol[j])
                    + log_gamma_kernel(prop, a, b)
                    - log_gamma_kernel(old, a, b)
                    + old.ln()
                    - prop.ln();
                if !(u.ln() < log_alpha) {
                    return Ok(false);
                }
                if let Some(jt) = joint.as_mut() {
                    match free_joint_prior(&self.x, &jt.sites, prop) {
                        Ok(jp) => jt.priors[j] = jp,
                        Err(e) if is_nonpd(&e) => {
                            self.nonpd += 1;
                            return Ok(false);
                        }
                        Err(e) => return Err(e),
                    }
                }
                theta_w[j] = prop;
                chol[j] = cp;
                self.theta_w_acc[j] += 1;
                Ok(true)
            }
        }
    }

    /// Metropolis update of the outer lengthscale θ_y,j.
    pub fn mh_theta_y<R: Rng + ?Sized>(&mut self, j: usize, rng: &mut R) -> Result<bool> {
        let old = self.outer.theta_y[j];
        let prop = propose_scale(old, rng);
        let mut cand = self.outer.clone();
        cand.theta_y[j] = prop;
        let ll = self.lml_with(&self.w, &cand)?;
        let (a, b) = (self.prior.alpha_theta, self.prior.beta_theta);
        let log_alpha = ll - self.loglik + log_gamma_kernel(prop, a, b) - log_gamma_kernel(old, a, b)
            + old.ln()
            - prop.ln();
        let accept = rng.random::<f64>().ln() < log_alpha;
        if accept {
            self.outer = cand;
            self.loglik = ll;
            self.theta_y_acc[j] += 1;
        }
        Ok(accept)
    }

    /// Metropolis update of the nugget.
    pub fn mh_nugget<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<bool> {
        let old = self.outer.g;
        let prop = propose_scale(old, rng);
        let u: f64 = rng.random();
        if prop < MIN_NUGGET {
            return Ok(false);
        }
        let mut cand = self.outer.clone();
        cand.g = prop;
        let ll = self.lml_with(&self.w, &cand)?;
        let (a, b) = NUGGET_PRIOR;
        let log_alpha = ll - self.loglik + log_gamma_kernel(prop, a, b) - log_gamma_kernel(old, a, b)
            + old.ln()
            - prop.ln();
        let accept = u.ln() < log_alpha;
        if accept {
            self.outer = cand;
            self.loglik = ll;
            self.g_acc += 1;
        }
        Ok(accept)
    }

    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let p = self.x.ncols();
        if !matches!(self.warp, WarpState::Identity) {
            for j in 0..p {
                self.ess_warp_step(j, rng)?;
            }
            for j in 0..p {
                self.mh_theta_w(j, rng)?;
            }
        }
        for j in 0..p {
            self.mh_theta_y(j, rng)?;
        }
        self.mh_nugget(rng)?;
        self.steps += 1;
        Ok(())
    }

    pub fn snapshot(&self) -> DeepDraw {
        let warp = match &self.warp {
            WarpState::Identity => WarpDraw::Identity,
            WarpState::Mono { z_g, theta_w, .. } => WarpDraw::Mono {
                z_g: z_g.iter().map(|z| z.as_slice().to_vec()).collect(),
                theta_w: theta_w.clone(),
            },
            WarpState::Free { theta_w, joint, .. } => WarpDraw::Free {
                w: self.w.clone(),
                theta_w: theta_w.clone(),
                w_test: joint.as_ref().map(|j| j.w_test.clone()),
            },
        };
        DeepDraw { warp, outer: self.outer.clone() }
    }

    fn diagnostics(&self, loglik_trace: Vec<f64>) -> DeepDiagnostics {
        let steps = self.steps.max(1) as f64;
        let rate = |v: &[usize]| v.iter().map(|&a| a as f64 / steps).collect();
        DeepDiagnostics {
            theta_w_accept_rate: rate(&self.theta_w_acc),
            theta_y_accept_rate: rate(&self.theta_y_acc),
            g_accept_rate: self.g_acc as f64 / steps,
            mean_shrinks: rate(&self.shrinks),
            nonpd_rejections: self.nonpd,
            loglik_trace,
        }
    }
}

fn mono_column(plan: &InterpPlan, z: &DVector<f64>, variant: Variant) -> Result<DVector<f64>> {
    let image = transform(z.as_slice(), variant)?;
    let mut out = vec![0.0; plan.query_count()];
    fo_approx_into(plan, image.values(), &mut out)?;
    Ok(DVector::from_vec(out))
}

fn run(model: DeepModel, x: &DMatrix<f64>, y: &[f64], prior: &PriorConfig, mcmc: &McmcConfig, opts: &DgpOptions) -> Result<DeepChain> {
    mcmc.validate()?;
    let mut s = DeepSampler::new(model, x, y, *prior, mcmc, opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mcmc.seed);
    let mut draws = Vec::with_capacity(mcmc.retained_count());
    let mut trace = Vec::with_capacity(mcmc.total);
    for t in 1..=mcmc.total {
        s.sweep(&mut rng)?;
        trace.push(s.loglik);
        if mcmc.keeps(t) {
            draws.push(s.snapshot());
        }
    }
    let grid = match &s.warp {
        WarpState::Mono { grid, .. } => Some(grid.clone()),
        _ => None,
    };
    let test_sites = match &s.warp {
        WarpState::Free { joint: Some(j), .. } => Some(j.sites.clone()),
        _ => None,
    };
    let y_center = y.iter().sum::<f64>() / y.len() as f64;
    Ok(DeepChain {
        model,
        x: x.clone(),
        y: s.y.as_slice().to_vec(),
        y_center,
        grid,
        variant: mcmc.variant,
        test_sites,
        diagnostics: s.diagnostics(trace),
        draws,
    })
}

/// One-layer GP with ARD lengthscales and a nugget.
pub fn fit_gp(x: &DMatrix<f64>, y: &[f64], prior: &PriorConfig, mcmc: &McmcConfig) -> Result<DeepChain> {
    run(DeepModel::Gp, x, y, prior, mcmc, &DgpOptions::default())
}

/// Two-layer GP whose input warping is a monotone transform per coordinate.
pub fn fit_mwdgp(x: &DMatrix<f64>, y: &[f64], prior: &PriorConfig, mcmc: &McmcConfig) -> Result<DeepChain> {
    run(DeepModel::MwDgp, x, y, prior, mcmc, &DgpOptions::default())
}

/// Two-layer GP with an unconstrained Gaussian warping of every column.
pub fn fit_dgp(x: &DMatrix<f64>, y: &[f64], prior: &PriorConfig, mcmc: &McmcConfig, opts: &DgpOptions) -> Result<DeepChain> {
    run(DeepModel::Dgp, x, y, prior, mcmc, opts)
}

/// Sampler access for step-level tests and custom drivers.
pub fn sampler(model: DeepModel, x: &DMatrix<f64>, y: &[f64], prior: &PriorConfig, mcmc: &McmcConfig, opts: &DgpOptions) -> Result<DeepSampler> {
    DeepSampler::new(model, x, y, *prior, mcmc, opts)
}

impl DeepChain {
    /// Warped training inputs of draw `t`.
    pub fn warped_train(&self, t: usize) -> Result<DMatrix<f64>> {
        self.warp_inputs(&self.draws[t], &self.x, true)
    }

    /// Warping of arbitrary inputs under draw `t`.
    pub fn warp_at(&self, t: usize, xs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.warp_inputs(&self.draws[t], xs, false)
    }

    fn warp_inputs(&self, draw: &DeepDraw, xs: &DMatrix<f64>, is_train: bool) -> Result<DMatrix<f64>> {
        if xs.ncols() != self.x.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "inputs have {} columns, chain was fit with {}",
                xs.ncols(),
                self.x.ncols()
            )));
        }
        match &draw.warp {
            WarpDraw::Identity => Ok(xs.clone()),
            WarpDraw::Mono { z_g, .. } => {
                let grid = self.grid.as_ref().ok_or(Error::Config("mono warping without a grid".into()))?;
                let mut out = DMatrix::zeros(xs.nrows(), xs.ncols());
                for j in 0..xs.ncols() {
                    let plan = fo_approx_init(grid, xs.column(j).as_slice())?;
                    let col = mono_column(&plan, &DVector::from_column_slice(&z_g[j]), self.variant)?;
                    out.set_column(j, &col);
                }
                Ok(out)
            }
            WarpDraw::Free { w, theta_w, w_test } => {
                if is_train {
                    return Ok(w.clone());
                }
                if let (Some(sites), Some(wt)) = (&self.test_sites, w_test) {
                    if sites == xs {
                        return Ok(wt.clone());
                    }
                }
                // kriging mean of each warping column
                let mut out = DMatrix::zeros(xs.nrows(), xs.ncols());
                for j in 0..xs.ncols() {
                    let k = KernelParams::isotropic(theta_w[j])?;
                    let chol = cholesky(&sq_exp_cov(&self.x, &k)?, &JitterPolicy::noise_free())?;
                    let cross = sq_exp_cross(&self.x, xs, &k)?;
                    let alpha = chol.solve(&w.column(j).into_owned());
                    out.set_column(j, &cross.tr_mul(&alpha));
                }
                Ok(out)
            }
        }
    }
}

struct DrawPrediction {
    mean: Vec<f64>,
    var: Vec<f64>,
    cov: Option<DMatrix<f64>>,
}

fn predict_draw(chain: &DeepChain, draw: &DeepDraw, xstar: &DMatrix<f64>, full_cov: bool) -> Result<DrawPrediction> {
    let w = chain.warp_inputs(draw, &chain.x, true)?;
    let ws = chain.warp_inputs(draw, xstar, false)?;
    let params = KernelParams::new(draw.outer.theta_y.clone())?;
    let chol = outer_factor(&w, &draw.outer)?;
    let y = DVector::from_column_slice(&chain.y);
    let n = y.len() as f64;
    let tau2 = chol.quad_form(&y) / n;
    let cross = sq_exp_cross(&w, &ws, &params)?;
    let a = chol.solve_lower_mat(&cross);
    let b = chol.solve_lower(&y);
    let mean: Vec<f64> = a.tr_mul(&b).iter().map(|m| m + chain.y_center).collect();
    let g = draw.outer.g;
    let var: Vec<f64> = a
        .column_iter()
        .map(|c| tau2 * ((1.0 - c.norm_squared()).max(0.0) + g))
        .collect();
    let cov = if full_cov {
        let prior = sq_exp_cov(&ws, &params)?;
        let raw = prior.as_matrix() - a.tr_mul(&a);
        let mut c = SymMatrix::symmetrize(raw).into_matrix();
        for i in 0..c.nrows() {
            c[(i, i)] = c[(i, i)].max(0.0) + g;
        }
        Some(c * tau2)
    } else {
        None
    };
    Ok(DrawPrediction { mean, var, cov })
}

/// Predictive mean and variance aggregated across retained draws by the law
/// of total variance. Each draw contributes a Gaussian kriging predictive with
/// plug-in scale `τ̂² = yᵀK⁻¹y / n`.
pub fn predict(chain: &DeepChain, xstar: &DMatrix<f64>, full_cov: bool) -> Result<PredictiveSummary> {
    if chain.draws.is_empty() {
        return Err(Error::EmptyChain);
    }
    let per: Vec<DrawPrediction> = chain
        .draws
        .par_iter()
        .map(|d| predict_draw(chain, d, xstar, full_cov))
        .collect::<Result<_>>()?;
    let m = xstar.nrows();
    let t = per.len() as f64;
    let means: Vec<Vec<f64>> = per.iter().map(|d| d.mean.clone()).collect();
    let (mean, mut var, cov) = location_moments(&means, m, full_cov);
    for d in &per {
        for (v, w) in var.iter_mut().zip(&d.var) {
            *v += w / t;
        }
    }
    let cov = cov.map(|mut c| {
        for d in &per {
            if let Some(dc) = &d.cov {
                c += dc / t;
            }
        }
        c
    });
    Ok(PredictiveSummary { mean, var, cov, dof: None })
}

/// Per-draw kriging means at `xstar`, one vector per retained draw.
pub fn predict_draw_means(chain: &DeepChain, xstar: &DMatrix<f64>) -> Result<Vec<Vec<f64>>> {
    chain
        .draws
        .par_iter()
        .map(|d| predict_draw(chain, d, xstar, false).map(|p| p.mean))
        .collect()
}

/// Alias of [`predict`] for the monowarped model.
pub fn predict_mwdgp(chain: &DeepChain, xstar: &DMatrix<f64>, full_cov: bool) -> Result<PredictiveSummary> {
    predict(chain, xstar, full_cov)
}

/// Mean absolute difference between warped and raw training inputs, averaged over draws.
pub fn mean_warp_deviation(chain: &DeepChain) -> Result<f64> {
    if chain.draws.is_empty() {
        return Err(Error::EmptyChain);
    }
    let mut total = 0.0;
    for t in 0..chain.draws.len() {
        let w = chain.warped_train(t)?;
        total += (w - &chain.x).abs().mean();
    }
    Ok(total / chain.draws.len() as f64)
}
