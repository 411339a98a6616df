//! Flat `key = value` configuration files for `fit` and `bench`.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown or repeated
//! keys are errors.

use std::path::{Path, PathBuf};

use monogp::bench::{ExperimentSpec, Method, TestDesign, TestFunction};
use monogp::monogp::{McmcConfig, PriorConfig};
use monogp::refinterp::Variant;

use crate::error::{CliError, CliResult};

/// Keys accepted by `fit` configuration files.
pub const FIT_KEYS: &[&str] = &[
    "model", "total", "burn", "thin", "n_g", "seed", "variant", "alpha_nu", "beta_nu", "alpha_theta", "beta_theta",
    "train", "test", "output_dir",
];

/// Keys accepted by `bench` spec files.
pub const BENCH_KEYS: &[&str] = &[
    "base", "name", "function", "noise_sd", "methods", "n", "n_test", "test_design", "reps", "seed", "threads",
    "timings", "plot", "n_g", "variant", "mono_total", "mono_burn", "mono_thin", "deep_total", "deep_burn",
    "deep_thin", "alpha_nu", "beta_nu", "alpha_theta", "beta_theta",
];

/// Parses `text` into ordered `(key, value)` pairs, checking keys against `allowed`.
pub fn parse_pairs(text: &str, allowed: &[&str], err: impl Fn(String, String) -> CliError) -> CliResult<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(format!("line {}", i + 1), format!("expected key = value, got '{line}'")))?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if !allowed.contains(&k.as_str()) {
            return Err(err(k, "unknown key".into()));
        }
        if out.iter().any(|(seen, _)| *seen == k) {
            return Err(err(k, "given more than once".into()));
        }
        out.push((k, v));
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str, err: &impl Fn(String, String) -> CliError) -> CliResult<T> {
    v.parse().map_err(|_| err(key.to_string(), format!("cannot parse '{v}'")))
}

fn parse_bool(key: &str, v: &str, err: &impl Fn(String, String) -> CliError) -> CliResult<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(err(key.to_string(), format!("expected true or false, got '{v}'"))),
    }
}

/// Settings for `fit`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: Method,
    pub mcmc: McmcConfig,
    pub prior: PriorConfig,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults for `model`: the mono-GP run length, or the longer GP-family run.
    pub fn for_model(model: Method) -> Self {
        let mcmc = if model == Method::MonoGp { McmcConfig::default() } else { McmcConfig::deep_default() };
        RunConfig { model, mcmc, prior: PriorConfig::default(), train: None, test: None, output_dir: None }
    }

    pub fn from_text(text: &str) -> CliResult<Self> {
        let err = |key: String, message: String| CliError::Config { key, message };
        let pairs = parse_pairs(text, FIT_KEYS, err)?;
        let model = match pairs.iter().find(|(k, _)| k == "model") {
            Some((_, v)) => v.parse().map_err(|_| err("model".into(), format!("unknown model '{v}'")))?,
            None => Method::MonoGp,
        };
        let mut cfg = RunConfig::for_model(model);
        for (k, v) in &pairs {
            match k.as_str() {
                "model" => {}
                "total" => cfg.mcmc.total = parse_num(k, v, &err)?,
                "burn" => cfg.mcmc.burn = parse_num(k, v, &err)?,
                "thin" => cfg.mcmc.thin = parse_num(k, v, &err)?,
                "n_g" => cfg.mcmc.n_g = parse_num(k, v, &err)?,
                "seed" => cfg.mcmc.seed = parse_num(k, v, &err)?,
                "variant" => cfg.mcmc.variant = v.parse().map_err(|_| err(k.clone(), format!("unknown variant '{v}'")))?,
                "alpha_nu" => cfg.prior.alpha_nu = parse_num(k, v, &err)?,
                "beta_nu" => cfg.prior.beta_nu = parse_num(k, v, &err)?,
                "alpha_theta" => cfg.prior.alpha_theta = parse_num(k, v, &err)?,
                "beta_theta" => cfg.prior.beta_theta = parse_num(k, v, &err)?,
                "train" => cfg.train = Some(PathBuf::from(v)),
                "test" => cfg.test = Some(PathBuf::from(v)),
                "output_dir" => cfg.output_dir = Some(PathBuf::from(v)),
                _ => unreachable!("key list checked by parse_pairs"),
            }
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        let wrap = |key: &str| {
            let key = key.to_string();
            move |e: monogp::Error| CliError::Config { key: key.clone(), message: e.to_string() }
        };
        self.mcmc.validate().map_err(wrap("total/burn/thin/n_g"))?;
        self.prior.validate().map_err(wrap("prior"))?;
        Ok(())
    }
}

/// Builds an experiment spec from a spec file. `base` names a built-in spec to
/// start from; otherwise `function` is required.
pub fn bench_spec_from_text(text: &str) -> CliResult<ExperimentSpec> {
    let err = |field: String, message: String| CliError::Spec { field, message };
    let pairs = parse_pairs(text, BENCH_KEYS, err)?;
    let get = |key: &str| pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
    let mut spec = match (get("base"), get("function")) {
        (Some(b), _) => ExperimentSpec::builtin(b).map_err(|e| err("base".into(), e.to_string()))?,
        (None, Some(f)) => {
            let function = TestFunction::from_name(f).map_err(|e| err("function".into(), e.to_string()))?;
            ExperimentSpec::new(f, function, vec![Method::MonoGp, Method::Gp], 100, 1000)
        }
        (None, None) => return Err(err("function".into(), "either 'base' or 'function' is required".into())),
    };
    for (k, v) in &pairs {
        match k.as_str() {
            "base" => {}
            "function" => {
                if get("base").is_some() {
                    spec.function = TestFunction::from_name(v).map_err(|e| err(k.clone(), e.to_string()))?;
                }
            }
            "name" => spec.name = v.clone(),
            "noise_sd" => spec.function.noise_sd = parse_num(k, v, &err)?,
            "methods" => {
                spec.methods = v
                    .split(',')
                    .map(|m| m.trim())
                    .filter(|m| !m.is_empty())
                    .map(|m| m.parse().map_err(|_| err(k.clone(), format!("unknown method '{m}'"))))
                    .collect::<CliResult<_>>()?
            }
            "n" => spec.n = parse_num(k, v, &err)?,
            "n_test" => spec.n_test = parse_num(k, v, &err)?,
            "test_design" => {
                spec.test_design = match v.as_str() {
                    "lhs" => TestDesign::Lhs,
                    "grid" => TestDesign::Grid,
                    _ => return Err(err(k.clone(), format!("expected lhs or grid, got '{v}'"))),
                }
            }
            "reps" => spec.reps = parse_num(k, v, &err)?,
            "seed" => spec.seed = parse_num(k, v, &err)?,
            "threads" => spec.threads = parse_num(k, v, &err)?,
            "timings" => spec.timings = parse_bool(k, v, &err)?,
            "plot" => spec.plot_data = parse_bool(k, v, &err)?,
            "n_g" => {
                let n_g = parse_num(k, v, &err)?;
                spec.mono_mcmc.n_g = n_g;
                spec.deep_mcmc.n_g = n_g;
            }
            "variant" => {
                let variant: Variant = v.parse().map_err(|_| err(k.clone(), format!("unknown variant '{v}'")))?;
                spec.mono_mcmc.variant = variant;
                spec.deep_mcmc.variant = variant;
            }
            "mono_total" => spec.mono_mcmc.total = parse_num(k, v, &err)?,
            "mono_burn" => spec.mono_mcmc.burn = parse_num(k, v, &err)?,
            "mono_thin" => spec.mono_mcmc.thin = parse_num(k, v, &err)?,
            "deep_total" => spec.deep_mcmc.total = parse_num(k, v, &err)?,
            "deep_burn" => spec.deep_mcmc.burn = parse_num(k, v, &err)?,
            "deep_thin" => spec.deep_mcmc.thin = parse_num(k, v, &err)?,
            "alpha_nu" => spec.prior.alpha_nu = parse_num(k, v, &err)?,
            "beta_nu" => spec.prior.beta_nu = parse_num(k, v, &err)?,
            "alpha_theta" => spec.prior.alpha_theta = parse_num(k, v, &err)?,
            "beta_theta" => spec.prior.beta_theta = parse_num(k, v, &err)?,
            _ => unreachable!("key list checked by parse_pairs"),
        }
    }
    spec.validate().map_err(|e| err("spec".into(), e.to_string()))?;
    Ok(spec)
}
