use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use monogp::bench::Method;
use monogp::refinterp::Variant;
use monogp_cli::commands::{self, PredictOptions, SynthOptions, TestInputs};
use monogp_cli::config::RunConfig;
use monogp_cli::{CliError, CliResult};

/// Monotone GP and monowarped deep GP surrogates.
#[derive(Debug, Parser)]
#[command(name = "monogp", version)]
struct Cli {
    /// Seed for every random draw; overrides seeds from config and spec files.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 keeps runs bit-reproducible.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Directory for all output files.
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model to a CSV (inputs x1..xp, then the response) and write chain.json.
    Fit {
        /// Training CSV with a header row.
        #[arg(long)]
        train: Option<PathBuf>,
        /// key = value config file; flags given here take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        /// mono-gp, gp, mw-dgp or dgp.
        #[arg(long)]
        model: Option<Method>,
        #[arg(long)]
        total: Option<usize>,
        #[arg(long)]
        burn: Option<usize>,
        #[arg(long)]
        thin: Option<usize>,
        #[arg(long)]
        n_g: Option<usize>,
        /// exp or linear.
        #[arg(long)]
        variant: Option<Variant>,
    },
    /// Predict from a saved chain at CSV or grid inputs.
    Predict {
        #[arg(long)]
        chain: PathBuf,
        /// Test CSV; a trailing response column is ignored.
        #[arg(long, conflicts_with = "grid", required_unless_present = "grid")]
        test: Option<PathBuf>,
        /// Product grid "start:end:count", shared by every input or one per input separated by commas.
        #[arg(long)]
        grid: Option<String>,
        /// Also write the full predictive covariance.
        #[arg(long)]
        full_cov: bool,
        /// Allow --full-cov above the size limit.
        #[arg(long)]
        force: bool,
        /// Also write per-draw predictive locations.
        #[arg(long)]
        samples: bool,
        /// Output CSV; defaults to predictions.csv in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a benchmark: a built-in spec name or a spec file.
    Bench {
        spec: String,
        /// Override the number of repetitions.
        #[arg(long)]
        reps: Option<usize>,
        /// Write plot-data and sensitivity CSVs.
        #[arg(long)]
        plot: bool,
        /// Write 0 in the timing columns so output files are reproducible.
        #[arg(long)]
        no_timings: bool,
    },
    /// Write synthetic train.csv and test.csv for a test function.
    Synth {
        #[arg(long)]
        function: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        n_test: usize,
        /// Use a full grid for the test inputs instead of a Latin hypercube.
        #[arg(long)]
        grid: bool,
        /// Override the function's default noise sd.
        #[arg(long)]
        noise_sd: Option<f64>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    if cli.threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    match cli.command {
        Command::Fit { train, config, model, total, burn, thin, n_g, variant } => {
            let mut cfg = match &config {
                Some(path) => RunConfig::from_file(path)?,
                None => RunConfig::for_model(model.unwrap_or(Method::MonoGp)),
            };
            if let Some(m) = model {
                if m != cfg.model {
                    let seed = cfg.mcmc.seed;
                    let fresh = RunConfig::for_model(m);
                    cfg.model = m;
                    if config.is_none() {
                        cfg.mcmc = fresh.mcmc;
                    }
                    cfg.mcmc.seed = seed;
                }
            }
            if let Some(v) = train {
                cfg.train = Some(v);
            }
            if let Some(v) = total {
                cfg.mcmc.total = v;
            }
            if let Some(v) = burn {
                cfg.mcmc.burn = v;
            }
            if let Some(v) = thin {
                cfg.mcmc.thin = v;
            }
            if let Some(v) = n_g {
                cfg.mcmc.n_g = v;
            }
            if let Some(v) = variant {
                cfg.mcmc.variant = v;
            }
            if let Some(s) = cli.seed {
                cfg.mcmc.seed = s;
            }
            let out_dir = cfg.output_dir.clone().unwrap_or(cli.output_dir);
            let outcome = commands::fit(&cfg, &out_dir)?;
            print!("{}", outcome.report);
            println!("chain written to {}", outcome.chain_path.display());
        }
        Command::Predict { chain, test, grid, full_cov, force, samples, out } => {
            let inputs = match (test, grid) {
                (Some(t), None) => TestInputs::Csv(t),
                (None, Some(g)) => TestInputs::Grid(g),
                _ => return Err(CliError::Usage("give exactly one of --test or --grid".into())),
            };
            let out = out.unwrap_or_else(|| cli.output_dir.join("predictions.csv"));
            let opts = PredictOptions { full_cov, force, samples, out };
            let rows = commands::predict(&chain, &inputs, &opts)?;
            println!("{rows} predictions written to {}", opts.out.display());
        }
        Command::Bench { spec, reps, plot, no_timings } => {
            let mut spec = commands::load_bench_spec(&spec)?;
            if let Some(r) = reps {
                spec.reps = r;
            }
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            spec.threads = cli.threads;
            spec.plot_data |= plot;
            if no_timings {
                spec.timings = false;
            }
            let summary = commands::bench(&spec, &cli.output_dir)?;
            print!("{summary}");
        }
        Command::Synth { function, n, n_test, grid, noise_sd } => {
            let opts = SynthOptions { function, n, n_test, grid_test: grid, noise_sd, seed: cli.seed.unwrap_or(1) };
            let (train, test) = commands::synth(&opts, &cli.output_dir)?;
            println!("wrote {} and {}", train.display(), test.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
