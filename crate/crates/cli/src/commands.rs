use std::path::Path;
use std::time::Instant;

use cvxsim::inference::{confidence_intervals, plugin_covariance};
use cvxsim::simbench::{coverage_experiment, qq_experiment};
use cvxsim::{Dataset, FittedLink, Link};

use crate::error::{CliError, CliResult};
use crate::manifest::{write_json, RunManifest};
use crate::model::ModelFile;
use crate::table::{read_numeric_csv, write_csv};
use crate::{CoverageArgs, FitArgs, PredictArgs, SimulateArgs};

/// Replication failures tolerated before a study counts as failed.
const MAX_FAILURE_RATE: f64 = 0.05;

fn finish<C: serde::Serialize>(command: &str, config: &C, seed: Option<u64>, start: Instant, outputs: &[&Path]) -> CliResult<()> {
    let mut manifest = RunManifest::new(command, config, seed, start.elapsed().as_secs_f64())?;
    for path in outputs {
        manifest.record(path)?;
    }
    manifest.write_beside(outputs[0])?;
    Ok(())
}

fn load_dataset(path: &Path) -> CliResult<Dataset> {
    let table = read_numeric_csv(path)?;
    if table.header.len() < 2 {
        return Err(CliError::Input(format!("{}: need at least one covariate column and a response column", path.display())));
    }
    let d = table.header.len() - 1;
    let x: Vec<Vec<f64>> = table.rows.iter().map(|r| r[..d].to_vec()).collect();
    let y: Vec<f64> = table.rows.iter().map(|r| r[d]).collect();
    Ok(Dataset::from_rows(&x, y)?)
}

pub fn fit(args: &FitArgs) -> CliResult<()> {
    let start = Instant::now();
    let cfg = args.estimator.config()?;
    let data = load_dataset(&args.data)?;
    let res = cvxsim::fit(&data, &cfg)?;
    let n = data.n();

    let (sigma_sq_hat, covariance, ci_95) = match plugin_covariance(&res, &data) {
        Ok(cov) => {
            let ci = confidence_intervals(&cov, &res.theta_hat, n, 0.95)?;
            let rows = (0..cov.sigma.nrows()).map(|i| cov.sigma.row(i).iter().copied().collect()).collect();
            (Some(cov.sigma_sq_hat), Some(rows), Some(ci.into_iter().map(|(lo, hi)| [lo, hi]).collect()))
        }
        Err(e) => {
            eprintln!("cvxsim: covariance unavailable: {e}");
            (None, None, None)
        }
    };
    let sse: f64 = res.fitted_values.iter().zip(data.y().iter()).map(|(m, y)| (y - m).powi(2)).sum();
    let (alpha, lambda, lipschitz) = match &res.link {
        FittedLink::Spline(s) => (Some(s.alpha().to_vec()), Some(s.lambda()), None),
        FittedLink::Affine(a) => (None, None, a.lipschitz_bound()),
    };
    let model = ModelFile {
        estimator: cfg.kind.name().to_string(),
        theta_hat: res.theta_hat.to_vec(),
        knots: res.link.knots().to_vec(),
        values: res.link.values().to_vec(),
        alpha,
        lambda,
        lipschitz,
        criterion: res.criterion(),
        criterion_trace: res.criterion_trace.clone(),
        converged: res.converged,
        n_outer: res.n_outer,
        start_index: res.start_index,
        n,
        sigma_sq_hat,
        covariance,
        ci_95,
        in_sample_rmse: (sse / n as f64).sqrt(),
        fitted_values: res.fitted_values.clone(),
    };
    write_json(&args.out, &model)?;
    finish("fit", args, Some(cfg.seed), start, &[&args.out])?;
    if !res.converged {
        return Err(CliError::Numerical(format!(
            "alternating minimization did not converge in {} iterations; partial model written",
            res.n_outer
        )));
    }
    Ok(())
}

pub fn predict(args: &PredictArgs) -> CliResult<()> {
    let start = Instant::now();
    let text = std::fs::read_to_string(&args.model).map_err(|e| CliError::Input(format!("{}: {e}", args.model.display())))?;
    let model: ModelFile =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", args.model.display())))?;
    let link = model.link()?;
    let table = read_numeric_csv(&args.data)?;
    let d = model.theta_hat.len();
    if !table.rows.is_empty() && table.header.len() != d && table.header.len() != d + 1 {
        return Err(CliError::Input(format!(
            "{}: model has {d} covariates but the file has {} columns",
            args.data.display(),
            table.header.len()
        )));
    }
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            let s: f64 = r[..d].iter().zip(&model.theta_hat).map(|(x, t)| x * t).sum();
            vec![link.eval(s).to_string()]
        })
        .collect();
    write_csv(&args.out, &["y_hat"], &rows)?;
    finish("predict", args, None, start, &[&args.out])
}

fn check_failures(failures: usize, total: usize) -> CliResult<()> {
    if failures as f64 > MAX_FAILURE_RATE * total as f64 {
        return Err(CliError::Numerical(format!("{failures} of {total} replications failed")));
    }
    Ok(())
}

pub fn coverage(args: &CoverageArgs) -> CliResult<()> {
    let start = Instant::now();
    let cfg = args.estimator.config()?;
    let spec = args.model.spec(args.n, args.estimator.seed)?;
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(CliError::Usage(format!("--level must lie in (0, 1), got {}", args.level)));
    }
    let report = coverage_experiment(&spec, &cfg, args.model.reps, args.level)?;
    write_json(&args.out, &report)?;
    finish("coverage", args, Some(spec.seed), start, &[&args.out])?;
    println!(
        "coverage {:?}, average length {:?}, failures {}",
        report.coverage, report.avg_length, report.failures
    );
    check_failures(report.failures, report.reps)
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let start = Instant::now();
    let cfg = args.estimator.config()?;
    let spec = args.model.spec(args.n[0], args.estimator.seed)?;
    let report = qq_experiment(&spec, &cfg, args.model.reps, &args.n)?;
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| vec![r.n.to_string(), r.rep.to_string(), r.sqrt_n_err.to_string()])
        .collect();
    write_csv(&args.export, &["n", "rep", "sqrt_n_err"], &rows)?;
    finish("simulate", args, Some(spec.seed), start, &[&args.export])?;
    for (n, v) in &report.variance {
        println!("n={n}: variance of sqrt(n)(theta_1 - theta0_1) = {v}");
    }
    check_failures(report.failures, args.model.reps * args.n.len())
}
