//! `cvxsim`: fit and apply convex single index models, and run simulation studies.
//!
//! Exit codes: 0 success, 1 usage error, 2 bad input, 3 numerical failure.

mod commands;
mod error;
mod manifest;
mod model;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cvxsim::simbench::Design;
use cvxsim::EstimatorKind;

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "cvxsim", version, about = "Convex single index regression")]
struct Cli {
    /// Worker threads for parallel starts and replications (overridden by CVXSIM_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model to a CSV file whose last column is the response.
    Fit(FitArgs),
    /// Evaluate a fitted model on new covariates.
    Predict(PredictArgs),
    /// Monte-Carlo coverage study of the plug-in confidence intervals.
    Coverage(CoverageArgs),
    /// Export √n(θ̂₁ − θ₀₁) across replications and sample sizes.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum EstimatorName {
    Llse,
    Plse,
    Cvxlse,
}

#[derive(Debug, Clone, Args, Serialize)]
struct EstimatorArgs {
    #[arg(long, value_enum)]
    estimator: EstimatorName,
    /// Lipschitz bound (required for llse).
    #[arg(long = "L")]
    lipschitz: Option<f64>,
    /// Penalty parameter for plse; defaults to 0.1·n^(−2/5).
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 5)]
    starts: usize,
    #[arg(long, default_value_t = 100)]
    max_outer: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl EstimatorArgs {
    fn kind(&self) -> CliResult<EstimatorKind> {
        match self.estimator {
            EstimatorName::Llse => {
                let lipschitz = self.lipschitz.ok_or_else(|| CliError::Usage("--L is required with --estimator llse".into()))?;
                Ok(EstimatorKind::Llse { lipschitz })
            }
            EstimatorName::Plse => Ok(EstimatorKind::Plse { lambda: self.lambda }),
            EstimatorName::Cvxlse => Ok(EstimatorKind::CvxLse),
        }
    }

    fn config(&self) -> CliResult<cvxsim::EstimatorConfig> {
        if self.starts == 0 {
            return Err(CliError::Usage("--starts must be at least 1".into()));
        }
        let mut cfg = cvxsim::EstimatorConfig::new(self.kind()?).with_seed(self.seed).with_starts(self.starts);
        cfg.max_outer_iter = self.max_outer;
        Ok(cfg)
    }
}

#[derive(Debug, Args, Serialize)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    estimator: EstimatorArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Covariates, optionally followed by a response column that is ignored.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModelName {
    Quad3,
    QuadD,
    Quad4Robust,
    Quad5Simple,
    AbsDep,
}

#[derive(Debug, Clone, Args, Serialize)]
struct ModelArgs {
    #[arg(long = "model-spec", value_enum)]
    model_spec: ModelName,
    /// Covariate dimension for quad-d.
    #[arg(long, default_value_t = 10)]
    dim: usize,
    /// Noise standard deviation; defaults to the design's own.
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long)]
    reps: usize,
}

impl ModelArgs {
    fn design(&self) -> Design {
        match self.model_spec {
            ModelName::Quad3 => Design::Quad3,
            ModelName::QuadD => Design::QuadD { dim: self.dim },
            ModelName::Quad4Robust => Design::Quad4Robust,
            ModelName::Quad5Simple => Design::Quad5Simple,
            ModelName::AbsDep => Design::AbsDep,
        }
    }

    fn spec(&self, n: usize, seed: u64) -> CliResult<cvxsim::simbench::ModelSpec> {
        if self.reps == 0 {
            return Err(CliError::Usage("--reps must be at least 1".into()));
        }
        let mut spec = cvxsim::simbench::ModelSpec::new(self.design(), n, seed);
        if let Some(sd) = self.noise_sd {
            if !(sd >= 0.0 && sd.is_finite()) {
                return Err(CliError::Usage(format!("--noise-sd must be nonnegative, got {sd}")));
            }
            spec.noise_sd = sd;
        }
        Ok(spec)
    }
}

#[derive(Debug, Args, Serialize)]
struct CoverageArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[command(flatten)]
    estimator: EstimatorArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[command(flatten)]
    estimator: EstimatorArgs,
    /// CSV with columns n, rep, sqrt_n_err.
    #[arg(long)]
    export: PathBuf,
}

fn configure_threads(flag: Option<usize>) -> CliResult<()> {
    let threads = match std::env::var("CVXSIM_THREADS") {
        Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| CliError::Usage(format!("CVXSIM_THREADS is not a count: {v:?}")))?),
        Err(_) => flag,
    };
    if let Some(k) = threads {
        if k == 0 {
            return Err(CliError::Usage("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure threads: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Fit(args) => commands::fit(&args),
        Command::Predict(args) => commands::predict(&args),
        Command::Coverage(args) => commands::coverage(&args),
        Command::Simulate(args) => commands::simulate(&args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cvxsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
