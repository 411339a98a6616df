//! Synthetic test functions, designs, scoring rules and the Monte Carlo
//! experiment runner.
//!
//! Seeds: repetition `r` of an experiment with base seed `s` uses
//! `rep_seed = splitmix64(s + r)`. Its train/test designs and noise come from a
//! generator seeded with `rep_seed`; method `m` fits with
//! `splitmix64(rep_seed ^ tag(m))`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{self, Write};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};

use crate::dgp::{self, DeepChain, DgpOptions};
use crate::error::{Error, Result};
use crate::monogp::{self, McmcConfig, MonoChain, PredictiveSummary, PriorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum FunctionKind {
    /// `10 / (1 + exp(−(10x − 5)))` on [0, 1].
    Logistic1d,
    /// `10 σ(10x₁ − 7) + 5 σ(10x₂ − 3)` on [0, 1]².
    Logistic2d,
    /// `atan(5x₁) + atan(2x₂) + x₃ + 2x₄² + 2/(1 + exp(−10(x₅ − ½)))` on [0, 1]⁵.
    Lopez5d,
    /// `Σ atan(5 (1 − 1/(p+1)) x_j)` on [0, 1]^p.
    Arctan { p: usize },
    /// Cross-in-tray on [−2, 2]².
    CrossInTray,
    /// `−Σ sin(x_i) sin^{2m}(i x_i² / π)` on [0, π]^p.
    Michalewicz { p: usize, m: f64 },
    /// `2 Φ(√2 (−4 − 3 Σ x_i)) − 1` on [−2, 2]^d.
    Plateau { d: usize },
}

/// A data-generating mechanism: a function plus iid Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub kind: FunctionKind,
    pub noise_sd: f64,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn std_normal_cdf(v: f64) -> f64 {
    Normal::standard().cdf(v)
}

impl FunctionKind {
    pub fn dim(&self) -> usize {
        match *self {
            FunctionKind::Logistic1d => 1,
            FunctionKind::Logistic2d | FunctionKind::CrossInTray => 2,
            FunctionKind::Lopez5d => 5,
            FunctionKind::Arctan { p } | FunctionKind::Michalewicz { p, .. } => p,
            FunctionKind::Plateau { d } => d,
        }
    }

    /// Native input interval shared by every coordinate.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            FunctionKind::CrossInTray | FunctionKind::Plateau { .. } => (-2.0, 2.0),
            FunctionKind::Michalewicz { .. } => (0.0, PI),
            _ => (0.0, 1.0),
        }
    }

    pub fn name(&self) -> String {
        match self {
            FunctionKind::Logistic1d => "logistic1d".into(),
            FunctionKind::Logistic2d => "logistic2d".into(),
            FunctionKind::Lopez5d => "lopez5d".into(),
            FunctionKind::Arctan { p } => format!("arctan{p}"),
            FunctionKind::CrossInTray => "cross-in-tray".into(),
            FunctionKind::Michalewicz { p, .. } => format!("michalewicz{p}d"),
            FunctionKind::Plateau { d } => format!("plateau{d}d"),
        }
    }

    /// Evaluates the function at a point in its native domain.
    pub fn eval_native(&self, x: &[f64]) -> f64 {
        match *self {
            FunctionKind::Logistic1d => 10.0 * sigmoid(10.0 * x[0] - 5.0),
            FunctionKind::Logistic2d => 10.0 * sigmoid(10.0 * x[0] - 7.0) + 5.0 * sigmoid(10.0 * x[1] - 3.0),
            FunctionKind::Lopez5d => {
                (5.0 * x[0]).atan()
                    + (2.0 * x[1]).atan()
                    + x[2]
                    + 2.0 * x[3] * x[3]
                    + 2.0 / (1.0 + (-10.0 * (x[4] - 0.5)).exp())
            }
            FunctionKind::Arctan { p } => {
                let c = 5.0 * (1.0 - 1.0 / (p as f64 + 1.0));
                x.iter().map(|v| (c * v).atan()).sum()
            }
            FunctionKind::CrossInTray => {
                let (a, b) = (x[0], x[1]);
                let r = (a * a + b * b).sqrt();
                let inner = (a.sin() * b.sin() * (100.0 - r / PI).abs().exp()).abs() + 1.0;
                -0.0001 * inner.powf(0.1)
            }
            FunctionKind::Michalewicz { m, .. } => -x
                .iter()
                .enumerate()
                .map(|(i, v)| v.sin() * ((i + 1) as f64 * v * v / PI).sin().powf(2.0 * m))
                .sum::<f64>(),
            FunctionKind::Plateau { .. } => {
                let s: f64 = x.iter().sum();
                2.0 * std_normal_cdf(2f64.sqrt() * (-4.0 - 3.0 * s)) - 1.0
            }
        }
    }

    /// Evaluates at a point coded to [0, 1]^p.
    pub fn eval_coded(&self, u: &[f64]) -> f64 {
        let (lo, hi) = self.domain();
        let native: Vec<f64> = u.iter().map(|v| lo + v * (hi - lo)).collect();
        self.eval_native(&native)
    }
}

impl TestFunction {
    /// Looks up a function by name with its default noise level.
    pub fn from_name(name: &str) -> Result<Self> {
        let (kind, noise_sd) = match name {
            "logistic1d" => (FunctionKind::Logistic1d, 1.0),
            "logistic2d" => (FunctionKind::Logistic2d, 0.1f64.sqrt()),
            "lopez5d" => (FunctionKind::Lopez5d, 0.1),
            "arctan10" => (FunctionKind::Arctan { p: 10 }, 0.1),
            "cross-in-tray" => (FunctionKind::CrossInTray, 0.0),
            "michalewicz3d" => (FunctionKind::Michalewicz { p: 3, m: 10.0 }, 0.0),
            "plateau2d" => (FunctionKind::Plateau { d: 2 }, 0.0),
            other => return Err(Error::UnknownFunction(other.to_string())),
        };
        Ok(TestFunction { kind, noise_sd })
    }

    pub fn names() -> &'static [&'static str] {
        &["logistic1d", "logistic2d", "lopez5d", "arctan10", "cross-in-tray", "michalewicz3d", "plateau2d"]
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }
}

/// Evaluates `f` at coded inputs (rows of `x`) and adds iid N(0, noise_sd²) noise.
/// Returns `(noisy, truth)`.
pub fn eval_function<R: Rng + ?Sized>(f: &TestFunction, x: &DMatrix<f64>, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.ncols() != f.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} takes {} inputs, got {}",
            f.kind.name(),
            f.dim(),
            x.ncols()
        )));
    }
    let truth: Vec<f64> = x
        .row_iter()
        .map(|r| f.kind.eval_coded(&r.iter().copied().collect::<Vec<_>>()))
        .collect();
    let noisy = truth
        .iter()
        .map(|t| {
            if f.noise_sd > 0.0 {
                t + f.noise_sd * rng.sample::<f64, _>(StandardNormal)
            } else {
                *t
            }
        })
        .collect();
    Ok((noisy, truth))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    Lhs,
    Grid,
    File,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub kind: DesignKind,
}

/// Latin hypercube sample of `n` points in [0, 1)^p: each column visits every
/// stratum `[i/n, (i+1)/n)` exactly once.
pub fn lhs<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Design {
    let mut x = DMatrix::zeros(n, p);
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..p {
        perm.shuffle(rng);
        for i in 0..n {
            let v = (perm[i] as f64 + rng.random::<f64>()) / n as f64;
            // guard the open upper end against rounding
            x[(i, j)] = v.min(f64::from_bits((((perm[i] + 1) as f64) / n as f64).to_bits() - 1));
        }
    }
    Design { x, kind: DesignKind::Lhs }
}

/// Full factorial grid with `side` evenly spaced levels per axis on [0, 1];
/// the first column varies fastest.
pub fn grid_design(side: usize, p: usize) -> Design {
    let total = side.pow(p as u32);
    let level = |k: usize| if side == 1 { 0.5 } else { k as f64 / (side - 1) as f64 };
    let x = DMatrix::from_fn(total, p, |i, j| level((i / side.pow(j as u32)) % side));
    Design { x, kind: DesignKind::Grid }
}

/// Root mean squared difference.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::LengthMismatch { expected: truth.len(), got: pred.len() });
    }
    let ss: f64 = pred.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}

/// Closed-form CRPS of Gaussian predictives, averaged over points:
/// `σ [z (2Φ(z) − 1) + 2φ(z) − 1/√π]` with `z = (y − μ)/σ`.
pub fn crps_gaussian(mean: &[f64], var: &[f64], y: &[f64]) -> Result<f64> {
    if mean.len() != y.len() || var.len() != y.len() || y.is_empty() {
        return Err(Error::LengthMismatch { expected: y.len(), got: mean.len().min(var.len()) });
    }
    let normal = Normal::standard();
    let mut total = 0.0;
    for (index, ((&m, &v), &obs)) in mean.iter().zip(var).zip(y).enumerate() {
        if !(v > 0.0) {
            return Err(Error::NonPositiveVariance { index, value: v });
        }
        let s = v.sqrt();
        let z = (obs - m) / s;
        total += s * (z * (2.0 * normal.cdf(z) - 1.0) + 2.0 * normal.pdf(z) - 1.0 / PI.sqrt());
    }
    Ok(total / y.len() as f64)
}

/// Symmetric central interval with `level` coverage: Student-t with the
/// summary's degrees of freedom, or Gaussian when it has none.
pub fn predictive_bounds(summary: &PredictiveSummary, level: f64) -> (Vec<f64>, Vec<f64>) {
    let q = 0.5 + level / 2.0;
    let (mult, var_to_scale2) = match summary.dof {
        Some(d) if d > 2 => {
            let t = StudentsT::new(0.0, 1.0, d as f64).expect("positive dof");
            (t.inverse_cdf(q), (d as f64 - 2.0) / d as f64)
        }
        _ => (Normal::standard().inverse_cdf(q), 1.0),
    };
    summary
        .mean
        .iter()
        .zip(&summary.var)
        .map(|(m, v)| {
            let h = mult * (v * var_to_scale2).sqrt();
            (m - h, m + h)
        })
        .unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    MonoGp,
    Gp,
    MwDgp,
    Dgp,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::MonoGp => "mono-gp",
            Method::Gp => "gp",
            Method::MwDgp => "mw-dgp",
            Method::Dgp => "dgp",
        }
    }

    fn tag(&self) -> u64 {
        match self {
            Method::MonoGp => 1,
            Method::Gp => 2,
            Method::MwDgp => 3,
            Method::Dgp => 4,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mono-gp" => Ok(Method::MonoGp),
            "gp" => Ok(Method::Gp),
            "mw-dgp" => Ok(Method::MwDgp),
            "dgp" => Ok(Method::Dgp),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How test inputs are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestDesign {
    /// A fresh Latin hypercube per repetition.
    Lhs,
    /// A fixed full-factorial grid; `n_test` must be a perfect p-th power.
    Grid,
}

/// Everything needed to reproduce one Monte Carlo comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub function: TestFunction,
    pub methods: Vec<Method>,
    pub n: usize,
    pub n_test: usize,
    pub test_design: TestDesign,
    pub reps: usize,
    pub seed: u64,
    pub prior: PriorConfig,
    /// Run settings for mono-GP.
    pub mono_mcmc: McmcConfig,
    /// Run settings for the GP family (gp, dgp, mw-dgp).
    pub deep_mcmc: McmcConfig,
    /// Record wall-clock times; when false, the time columns are written as 0.
    pub timings: bool,
    pub plot_data: bool,
    /// Worker threads across repetitions; 1 runs sequentially.
    pub threads: usize,
}

impl ExperimentSpec {
    pub fn new(name: &str, function: TestFunction, methods: Vec<Method>, n: usize, n_test: usize) -> Self {
        ExperimentSpec {
            name: name.to_string(),
            function,
            methods,
            n,
            n_test,
            test_design: TestDesign::Lhs,
            reps: 5,
            seed: 1,
            prior: PriorConfig::default(),
            mono_mcmc: McmcConfig::default(),
            deep_mcmc: McmcConfig::deep_default(),
            timings: true,
            plot_data: false,
            threads: 1,
        }
    }

    /// Desk-scale versions of the standard comparisons.
    pub fn builtin(name: &str) -> Result<Self> {
        let f = |n: &str| TestFunction::from_name(n);
        use Method::*;
        let spec = match name {
            "logistic1d-smoke" => {
                let mut s = Self::new(name, f("logistic1d")?, vec![MonoGp, Gp], 20, 100);
                s.test_design = TestDesign::Grid;
                s.reps = 1;
                s.deep_mcmc = McmcConfig::default();
                s
            }
            "logistic2d" => {
                let mut s = Self::new(name, f("logistic2d")?, vec![MonoGp, Gp], 100, 2500);
                s.test_design = TestDesign::Grid;
                s.reps = 10;
                s.deep_mcmc = McmcConfig::default();
                s
            }
            "lopez5d" => {
                let mut s = Self::new(name, f("lopez5d")?, vec![MonoGp, Gp], 100, 1000);
                s.deep_mcmc = McmcConfig::default();
                s
            }
            "arctan10" => {
                let mut s = Self::new(name, f("arctan10")?, vec![MonoGp, Gp], 100, 1000);
                s.deep_mcmc = McmcConfig::default();
                s
            }
            "cross-in-tray" => {
                let mut s = Self::new(name, f("cross-in-tray")?, vec![MwDgp, Dgp, Gp], 40, 900);
                s.test_design = TestDesign::Grid;
                s
            }
            "michalewicz3d" => Self::new(name, f("michalewicz3d")?, vec![MwDgp, Dgp, Gp], 100, 1000),
            "plateau2d" => {
                let mut s = Self::new(name, f("plateau2d")?, vec![MonoGp, Gp, Dgp, MwDgp], 100, 1600);
                s.reps = 3;
                s
            }
            other => return Err(Error::Config(format!("no built-in experiment named '{other}'"))),
        };
        Ok(spec)
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["logistic1d-smoke", "logistic2d", "lopez5d", "arctan10", "cross-in-tray", "michalewicz3d", "plateau2d"]
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config("n must be at least 2".into()));
        }
        if self.n_test == 0 {
            return Err(Error::Config("n_test must be positive".into()));
        }
        if self.test_design == TestDesign::Grid {
            grid_side(self.n_test, self.function.dim())?;
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        self.prior.validate()?;
        self.mono_mcmc.validate()?;
        self.deep_mcmc.validate()?;
        Ok(())
    }

    pub fn mcmc_for(&self, method: Method, seed: u64) -> McmcConfig {
        let base = if method == Method::MonoGp { self.mono_mcmc } else { self.deep_mcmc };
        McmcConfig { seed, ..base }
    }
}

fn grid_side(n_test: usize, p: usize) -> Result<usize> {
    let side = (n_test as f64).powf(1.0 / p as f64).round() as usize;
    if side.pow(p as u32) != n_test {
        return Err(Error::Config(format!("n_test = {n_test} is not a perfect power for a {p}-d grid")));
    }
    Ok(side)
}

/// splitmix64 finalizer, used to derive independent seeds.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rep_seed(base: u64, rep: usize) -> u64 {
    splitmix64(base.wrapping_add(rep as u64))
}

pub fn method_seed(rep_seed: u64, method: Method) -> u64 {
    splitmix64(rep_seed ^ method.tag())
}

/// Training and testing data of one repetition.
#[derive(Debug, Clone)]
pub struct RepData {
    pub rep: usize,
    pub seed: u64,
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub x_test: DMatrix<f64>,
    pub y_test: Vec<f64>,
}

pub fn prepare_rep(spec: &ExperimentSpec, rep: usize) -> Result<RepData> {
    let seed = rep_seed(spec.seed, rep);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = spec.function.dim();
    let train = lhs(spec.n, p, &mut rng);
    let (y, _) = eval_function(&spec.function, &train.x, &mut rng)?;
    let test = match spec.test_design {
        TestDesign::Lhs => lhs(spec.n_test, p, &mut rng),
        TestDesign::Grid => grid_design(grid_side(spec.n_test, p)?, p),
    };
    let noiseless = TestFunction { noise_sd: 0.0, ..spec.function };
    let (_, y_test) = eval_function(&noiseless, &test.x, &mut rng)?;
    Ok(RepData { rep, seed, x: train.x, y, x_test: test.x, y_test })
}

/// A fitted chain of either family.
#[derive(Debug, Clone)]
pub enum FittedModel {
    Mono(MonoChain),
    Deep(DeepChain),
}

impl FittedModel {
    pub fn predict(&self, xstar: &DMatrix<f64>, full_cov: bool) -> Result<PredictiveSummary> {
        match self {
            FittedModel::Mono(c) => monogp::predict_moments(c, xstar, full_cov),
            FittedModel::Deep(c) => dgp::predict(c, xstar, full_cov),
        }
    }
}

pub fn fit_method(method: Method, x: &DMatrix<f64>, y: &[f64], prior: &PriorConfig, mcmc: &McmcConfig) -> Result<FittedModel> {
    Ok(match method {
        Method::MonoGp => FittedModel::Mono(monogp::fit(x, y, prior, mcmc)?),
        Method::Gp => FittedModel::Deep(dgp::fit_gp(x, y, prior, mcmc)?),
        Method::MwDgp => FittedModel::Deep(dgp::fit_mwdgp(x, y, prior, mcmc)?),
        Method::Dgp => FittedModel::Deep(dgp::fit_dgp(x, y, prior, mcmc, &DgpOptions::default())?),
    })
}

/// One (method, repetition) result. Failed fits carry `error` and NaN metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub method: Method,
    pub rep: usize,
    pub rmse: f64,
    pub crps: f64,
    pub fit_seconds: f64,
    pub predict_seconds: f64,
    pub error: Option<String>,
}

/// Per-point predictions for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub method: Method,
    pub rep: usize,
    pub x: DMatrix<f64>,
    pub truth: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Posterior mean of each coordinate's contribution ν_j F_j at the test inputs (mono-GP).
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityData {
    pub rep: usize,
    pub x: DMatrix<f64>,
    pub components: DMatrix<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<MetricsRow>,
    pub plots: Vec<PlotData>,
    pub sensitivity: Vec<SensitivityData>,
}

impl ExperimentResult {
    /// Metrics of one method in repetition order, skipping failed rows.
    pub fn metric(&self, method: Method, pick: impl Fn(&MetricsRow) -> f64) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.error.is_none())
            .map(pick)
            .collect()
    }
}

/// Outcome of fitting and scoring one method on one repetition.
pub struct MethodRun {
    pub row: MetricsRow,
    pub model: Option<FittedModel>,
    pub summary: Option<PredictiveSummary>,
}

pub fn run_method(spec: &ExperimentSpec, data: &RepData, method: Method) -> MethodRun {
    let mcmc = spec.mcmc_for(method, method_seed(data.seed, method));
    let clock = |t: Instant| if spec.timings { t.elapsed().as_secs_f64() } else { 0.0 };
    let failed = |e: Error, fit_s: f64| MethodRun {
        row: MetricsRow {
            method,
            rep: data.rep,
            rmse: f64::NAN,
            crps: f64::NAN,
            fit_seconds: fit_s,
            predict_seconds: 0.0,
            error: Some(e.to_string()),
        },
        model: None,
        summary: None,
    };
    let t0 = Instant::now();
    let model = match fit_method(method, &data.x, &data.y, &spec.prior, &mcmc) {
        Ok(m) => m,
        Err(e) => return failed(e, clock(t0)),
    };
    let fit_seconds = clock(t0);
    let t1 = Instant::now();
    let scored = model.predict(&data.x_test, false).and_then(|s| {
        let r = rmse(&s.mean, &data.y_test)?;
        let c = crps_gaussian(&s.mean, &s.var, &data.y_test)?;
        Ok((s, r, c))
    });
    let predict_seconds = clock(t1);
    match scored {
        Ok((summary, rmse, crps)) => MethodRun {
            row: MetricsRow { method, rep: data.rep, rmse, crps, fit_seconds, predict_seconds, error: None },
            model: Some(model),
            summary: Some(summary),
        },
        Err(e) => failed(e, fit_seconds),
    }
}

fn run_rep(spec: &ExperimentSpec, rep: usize) -> ExperimentResult {
    let mut out = ExperimentResult::default();
    let data = match prepare_rep(spec, rep) {
        Ok(d) => d,
        Err(e) => {
            for &method in &spec.methods {
                out.rows.push(MetricsRow {
                    method,
                    rep,
                    rmse: f64::NAN,
                    crps: f64::NAN,
                    fit_seconds: 0.0,
                    predict_seconds: 0.0,
                    error: Some(e.to_string()),
                });
            }
            return out;
        }
    };
    for &method in &spec.methods {
        let run = run_method(spec, &data, method);
        if let (true, Some(summary)) = (spec.plot_data, &run.summary) {
            let (lower, upper) = predictive_bounds(summary, 0.90);
            out.plots.push(PlotData {
                method,
                rep,
                x: data.x_test.clone(),
                truth: data.y_test.clone(),
                mean: summary.mean.clone(),
                lower,
                upper,
            });
        }
        if let (true, Some(FittedModel::Mono(chain))) = (spec.plot_data, &run.model) {
            if let Ok(components) = monogp::latent_component_means(chain, &data.x_test) {
                out.sensitivity.push(SensitivityData { rep, x: data.x_test.clone(), components });
            }
        }
        if let Some(e) = &run.row.error {
            log::warn!("{} rep {rep} {method} failed: {e}", spec.name);
        }
        out.rows.push(run.row);
    }
    out
}

/// Runs every (repetition, method) pair. Failures become error rows; the table
/// is ordered by repetition, then by method as listed in the spec.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let per_rep: Vec<ExperimentResult> = if spec.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.threads)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| (0..spec.reps).into_par_iter().map(|r| run_rep(spec, r)).collect())
    } else {
        (0..spec.reps).map(|r| run_rep(spec, r)).collect()
    };
    let mut out = ExperimentResult::default();
    for r in per_rep {
        out.rows.extend(r.rows);
        out.plots.extend(r.plots);
        out.sensitivity.extend(r.sensitivity);
    }
    Ok(out)
}

pub const METRICS_HEADER: &str = "method,rep,rmse,crps,fit_seconds,predict_seconds";

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NA".to_string()
    }
}

/// Writes the metrics table as CSV. Failed rows have `NA` metrics.
pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], mut w: W) -> io::Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.method,
            r.rep,
            fmt_num(r.rmse),
            fmt_num(r.crps),
            fmt_num(r.fit_seconds),
            fmt_num(r.predict_seconds)
        )?;
    }
    Ok(())
}

/// Writes one plot-data table: x columns, truth, mean, 5% and 95% bounds.
pub fn write_plot_csv<W: Write>(plot: &PlotData, mut w: W) -> io::Result<()> {
    let mut header = String::new();
    for j in 0..plot.x.ncols() {
        let _ = write!(header, "x{},", j + 1);
    }
    header.push_str("y_true,mean,lower05,upper95");
    writeln!(w, "{header}")?;
    for i in 0..plot.x.nrows() {
        let mut line = String::new();
        for j in 0..plot.x.ncols() {
            let _ = write!(line, "{},", plot.x[(i, j)]);
        }
        let _ = write!(
            line,
            "{},{},{},{}",
            plot.truth[i], plot.mean[i], plot.lower[i], plot.upper[i]
        );
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Writes per-coordinate latent contributions: x columns then one `f{j}` column per input.
pub fn write_sensitivity_csv<W: Write>(data: &SensitivityData, mut w: W) -> io::Result<()> {
    let p = data.x.ncols();
    let mut header: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    header.extend((1..=data.components.ncols()).map(|j| format!("f{j}")));
    writeln!(w, "{}", header.join(","))?;
    for i in 0..data.x.nrows() {
        let vals: Vec<String> = data
            .x
            .row(i)
            .iter()
            .chain(data.components.row(i).iter())
            .map(|v| v.to_string())
            .collect();
        writeln!(w, "{}", vals.join(","))?;
    }
    Ok(())
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}
