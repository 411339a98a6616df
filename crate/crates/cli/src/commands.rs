use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use monogp::bench::{
    self, eval_function, fit_method, grid_design, lhs, median, predictive_bounds, write_metrics_csv, write_plot_csv,
    write_sensitivity_csv, ExperimentSpec, FittedModel, TestFunction,
};
use monogp::dgp::{self, WarpDraw};
use monogp::monogp::predict_samples;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chainfile::ChainFile;
use crate::config::{bench_spec_from_text, RunConfig};
use crate::data::{create, parse_grid, read_table, write_table, InputCoding};
use crate::error::{CliError, CliResult};

/// Above this many test points `--full-cov` needs `--force`.
pub const FULL_COV_LIMIT: usize = 1000;

pub struct FitOutcome {
    pub chain_path: PathBuf,
    pub report_path: PathBuf,
    pub report: String,
}

pub fn fit(cfg: &RunConfig, output_dir: &Path) -> CliResult<FitOutcome> {
    cfg.validate()?;
    let train = cfg.train.as_ref().ok_or_else(|| CliError::Config {
        key: "train".into(),
        message: "no training CSV given (--train or 'train' in the config)".into(),
    })?;
    let table = read_table(train)?;
    if table.ncols() < 2 {
        return Err(CliError::Parse {
            path: train.clone(),
            row: 1,
            column: table.ncols(),
            message: "need at least one input column and a response column".into(),
        });
    }
    let p = table.ncols() - 1;
    let x = table.leading_columns(p);
    let y = table.column(p);
    let coding = InputCoding::fit(&x);
    let model = fit_method(cfg.model, &coding.code(&x), &y, &cfg.prior, &cfg.mcmc)?;
    let file = ChainFile::new(model, coding, table.header.clone());
    let chain_path = output_dir.join("chain.json");
    file.save(&chain_path)?;
    let report = fit_report(&file, cfg);
    let report_path = output_dir.join("fit_report.txt");
    let mut w = create(&report_path)?;
    w.write_all(report.as_bytes()).map_err(|e| CliError::io(&report_path, e))?;
    w.flush().map_err(|e| CliError::io(&report_path, e))?;
    Ok(FitOutcome { chain_path, report_path, report })
}

struct TraceSummary {
    mean: f64,
    sd: f64,
    q05: f64,
    q50: f64,
    q95: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn summarize(values: &[f64]) -> TraceSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    TraceSummary { mean, sd, q05: quantile(&sorted, 0.05), q50: quantile(&sorted, 0.5), q95: quantile(&sorted, 0.95) }
}

fn fmt_rates(r: &[f64]) -> String {
    r.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" ")
}

pub fn fit_report(file: &ChainFile, cfg: &RunConfig) -> String {
    let mut s = String::new();
    let p = file.coding.dim();
    let _ = writeln!(s, "model: {}", file.model);
    let _ = writeln!(s, "inputs: {} ({})", p, file.columns[..p].join(", "));
    let _ = writeln!(
        s,
        "mcmc: total {} burn {} thin {} n_g {} seed {} variant {:?}",
        cfg.mcmc.total, cfg.mcmc.burn, cfg.mcmc.thin, cfg.mcmc.n_g, cfg.mcmc.seed, cfg.mcmc.variant
    );
    let _ = writeln!(s, "retained draws: {}", file.retained());
    let mut traces: Vec<(String, Vec<f64>)> = Vec::new();
    match &file.chain {
        crate::chainfile::Payload::Mono(c) => {
            let d = &c.diagnostics;
            let _ = writeln!(s, "acceptance nu: {}", fmt_rates(&d.nu_accept_rate));
            let _ = writeln!(s, "acceptance theta: {}", fmt_rates(&d.theta_accept_rate));
            let _ = writeln!(s, "mean ESS shrinks: {}", fmt_rates(&d.mean_shrinks));
            let _ = writeln!(s, "theta proposals rejected as not factorizable: {}", d.theta_nonpd_rejections);
            for j in 0..c.p {
                traces.push((format!("nu{}", j + 1), c.draws.iter().map(|d| d.nu[j]).collect()));
                traces.push((format!("theta{}", j + 1), c.draws.iter().map(|d| d.theta[j]).collect()));
            }
            traces.push(("mu_hat".into(), c.draws.iter().map(|d| d.mu_hat).collect()));
            traces.push(("s2".into(), c.draws.iter().map(|d| d.s2).collect()));
        }
        crate::chainfile::Payload::Deep(c) => {
            let d = &c.diagnostics;
            if !d.theta_w_accept_rate.is_empty() {
                let _ = writeln!(s, "acceptance theta_w: {}", fmt_rates(&d.theta_w_accept_rate));
                let _ = writeln!(s, "mean ESS shrinks: {}", fmt_rates(&d.mean_shrinks));
            }
            let _ = writeln!(s, "acceptance theta_y: {}", fmt_rates(&d.theta_y_accept_rate));
            let _ = writeln!(s, "acceptance g: {:.3}", d.g_accept_rate);
            let _ = writeln!(s, "proposals rejected as not factorizable: {}", d.nonpd_rejections);
            let warp_theta = |draw: &monogp::dgp::DeepDraw| match &draw.warp {
                WarpDraw::Identity => None,
                WarpDraw::Mono { theta_w, .. } | WarpDraw::Free { theta_w, .. } => Some(theta_w.clone()),
            };
            if c.draws.first().and_then(warp_theta).is_some() {
                for j in 0..p {
                    traces.push((
                        format!("theta_w{}", j + 1),
                        c.draws.iter().filter_map(warp_theta).map(|t| t[j]).collect(),
                    ));
                }
            }
            for j in 0..p {
                traces.push((format!("theta_y{}", j + 1), c.draws.iter().map(|d| d.outer.theta_y[j]).collect()));
            }
            traces.push(("g".into(), c.draws.iter().map(|d| d.outer.g).collect()));
        }
    }
    if file.retained() > 0 {
        let _ = writeln!(s, "\n{:<12} {:>12} {:>12} {:>12} {:>12} {:>12}", "parameter", "mean", "sd", "q05", "median", "q95");
        for (name, v) in traces {
            let t = summarize(&v);
            let _ = writeln!(
                s,
                "{:<12} {:>12.5} {:>12.5} {:>12.5} {:>12.5} {:>12.5}",
                name, t.mean, t.sd, t.q05, t.q50, t.q95
            );
        }
    }
    s
}

/// Where `predict` takes its test inputs from.
pub enum TestInputs {
    Csv(PathBuf),
    Grid(String),
}

pub struct PredictOptions {
    pub full_cov: bool,
    pub force: bool,
    pub samples: bool,
    pub out: PathBuf,
}

pub fn predict(chain_path: &Path, inputs: &TestInputs, opts: &PredictOptions) -> CliResult<usize> {
    let file = ChainFile::load(chain_path)?;
    let p = file.coding.dim();
    let x = match inputs {
        TestInputs::Csv(path) => {
            let t = read_table(path)?;
            // a trailing response column is tolerated and ignored
            if t.ncols() != p && t.ncols() != p + 1 {
                return Err(CliError::Model(monogp::Error::DimensionMismatch(format!(
                    "{} has {} columns, the chain was fit with {p} inputs",
                    path.display(),
                    t.ncols()
                ))));
            }
            t.leading_columns(p)
        }
        TestInputs::Grid(spec) => parse_grid(spec, p)?,
    };
    let m = x.nrows();
    if opts.full_cov && m > FULL_COV_LIMIT && !opts.force {
        return Err(CliError::Usage(format!(
            "--full-cov on {m} test points would build a {m}x{m} matrix; the limit is {FULL_COV_LIMIT}, pass --force to override"
        )));
    }
    let coded = file.coding.code(&x);
    let model = file.model();
    let summary = model.predict(&coded, opts.full_cov)?;
    let (lower, upper) = predictive_bounds(&summary, 0.95);
    let mut header: Vec<String> = file.columns[..p].to_vec();
    header.extend(["mean", "var", "lower95", "upper95"].map(String::from));
    let rows = (0..m).map(|i| {
        let mut r: Vec<f64> = x.row(i).iter().copied().collect();
        r.extend([summary.mean[i], summary.var[i], lower[i], upper[i]]);
        r
    });
    write_table(&opts.out, &header, rows)?;
    if let Some(cov) = &summary.cov {
        let path = sibling(&opts.out, "cov");
        let header: Vec<String> = (1..=m).map(|i| format!("c{i}")).collect();
        write_table(&path, &header, cov.row_iter().map(|r| r.iter().copied().collect()))?;
    }
    if opts.samples {
        let locations: Vec<Vec<f64>> = match &model {
            FittedModel::Mono(c) => predict_samples(c, &coded)?.into_iter().map(|s| s.location).collect(),
            FittedModel::Deep(c) => dgp::predict_draw_means(c, &coded)?,
        };
        let path = sibling(&opts.out, "samples");
        let header: Vec<String> = (1..=m).map(|i| format!("p{i}")).collect();
        write_table(&path, &header, locations)?;
    }
    Ok(m)
}

/// `dir/name.csv` becomes `dir/name_<suffix>.csv`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "predictions".into());
    path.with_file_name(format!("{stem}_{suffix}.csv"))
}

/// Resolves a bench argument: an existing file is read as a spec file,
/// anything else must name a built-in spec.
pub fn load_bench_spec(arg: &str) -> CliResult<ExperimentSpec> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        return bench_spec_from_text(&text);
    }
    ExperimentSpec::builtin(arg).map_err(|_| CliError::Spec {
        field: "spec".into(),
        message: format!(
            "'{arg}' is neither a spec file nor a built-in spec ({})",
            ExperimentSpec::builtin_names().join(", ")
        ),
    })
}

pub fn bench(spec: &ExperimentSpec, output_dir: &Path) -> CliResult<String> {
    spec.validate().map_err(|e| CliError::Spec { field: "spec".into(), message: e.to_string() })?;
    let out = bench::run_experiment(spec)?;
    let metrics = output_dir.join("metrics.csv");
    let mut w = create(&metrics)?;
    write_metrics_csv(&out.rows, &mut w).map_err(|e| CliError::io(&metrics, e))?;
    w.flush().map_err(|e| CliError::io(&metrics, e))?;
    for plot in &out.plots {
        let path = output_dir.join("plots").join(format!("{}_rep{}.csv", plot.method, plot.rep));
        let mut w = create(&path)?;
        write_plot_csv(plot, &mut w).map_err(|e| CliError::io(&path, e))?;
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    for sens in &out.sensitivity {
        let path = output_dir.join("plots").join(format!("sensitivity_rep{}.csv", sens.rep));
        let mut w = create(&path)?;
        write_sensitivity_csv(sens, &mut w).map_err(|e| CliError::io(&path, e))?;
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    let mut s = format!("{}: {} reps, n = {}, n_test = {}\n", spec.name, spec.reps, spec.n, spec.n_test);
    let _ = writeln!(s, "{:<8} {:>12} {:>12} {:>8}", "method", "median rmse", "median crps", "failed");
    for &m in &spec.methods {
        let failed = out.rows.iter().filter(|r| r.method == m && r.error.is_some()).count();
        let _ = writeln!(
            s,
            "{:<8} {:>12.5} {:>12.5} {:>8}",
            m.name(),
            median(&out.metric(m, |r| r.rmse)),
            median(&out.metric(m, |r| r.crps)),
            failed
        );
    }
    Ok(s)
}

pub struct SynthOptions {
    pub function: String,
    pub n: usize,
    pub n_test: usize,
    pub grid_test: bool,
    pub noise_sd: Option<f64>,
    pub seed: u64,
}

/// Writes `train.csv` (noisy) and `test.csv` (noise-free truth) in native units.
pub fn synth(opts: &SynthOptions, output_dir: &Path) -> CliResult<(PathBuf, PathBuf)> {
    let mut f = TestFunction::from_name(&opts.function)?;
    if let Some(sd) = opts.noise_sd {
        if !(sd >= 0.0) {
            return Err(CliError::Usage(format!("noise sd must be non-negative, got {sd}")));
        }
        f.noise_sd = sd;
    }
    if opts.n == 0 || opts.n_test == 0 {
        return Err(CliError::Usage("n and n-test must be positive".into()));
    }
    let p = f.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let train = lhs(opts.n, p, &mut rng).x;
    let (y, _) = eval_function(&f, &train, &mut rng)?;
    let test = if opts.grid_test {
        let side = (opts.n_test as f64).powf(1.0 / p as f64).round() as usize;
        if side.pow(p as u32) != opts.n_test {
            return Err(CliError::Usage(format!("n-test = {} is not a perfect power for a {p}-d grid", opts.n_test)));
        }
        grid_design(side, p).x
    } else {
        lhs(opts.n_test, p, &mut rng).x
    };
    let (_, truth) = eval_function(&TestFunction { noise_sd: 0.0, ..f }, &test, &mut rng)?;
    let (lo, hi) = f.kind.domain();
    let native = |u: &DMatrix<f64>| u.map(|v| lo + v * (hi - lo));
    let mut header: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    let rows = |x: DMatrix<f64>, y: &[f64]| -> Vec<Vec<f64>> {
        (0..x.nrows())
            .map(|i| x.row(i).iter().copied().chain(std::iter::once(y[i])).collect())
            .collect()
    };
    let train_path = output_dir.join("train.csv");
    let test_path = output_dir.join("test.csv");
    write_table(&train_path, &header, rows(native(&train), &y))?;
    write_table(&test_path, &header, rows(native(&test), &truth))?;
    Ok((train_path, test_path))
}
