//! Simulation designs and Monte-Carlo experiments.
//!
//! Every draw comes from [`SimRng`]. Row `i` of a dataset consumes the stream
//! in a fixed order: the covariates left to right (for `AbsDep`: `X₁`, `X₂`,
//! `Z₁`, `Z₂`, then one uniform for each Bernoulli), followed by the noise.
//! Replication `r` of an experiment with master seed `s` uses
//! `split_seed(s, r)` for both the data and the estimator's random starts.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::driver::{fit, EstimatorConfig};
use crate::error::{Error, Result};
use crate::index::{normalize_theta, Dataset, IndexParameter};
use crate::inference::{confidence_intervals, plugin_covariance};
use crate::rng::{split_seed, SimRng};
use crate::stats::{mean, sample_variance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// `Y = (θ₀ᵀX)² + N(0, 0.3²)`, `X ~ U[−1,1]³`, `θ₀ = 1₃/√3`.
    Quad3,
    /// `Y = (θ₀ᵀX)² + N(0, 0.2²)`, `X ~ U[−1,5]^d`, `θ₀ = (2, 1, 0, …)/√5`.
    QuadD { dim: usize },
    /// `Y = (θ₀ᵀX)² + N(0, 0.1²)`, `X ~ U[−1,1]⁴`, `θ₀ = 1₄/2`.
    Quad4Robust,
    /// `Y = (θ₀ᵀX)² + N(0, 1)`, `X ~ U[−1,1]⁵`, `θ₀ = 1₅/√5`.
    Quad5Simple,
    /// `Y = |θ₀ᵀX| + N(0, 0.1²)` with dependent, partly binary covariates.
    AbsDep,
}

impl Design {
    pub fn dim(&self) -> usize {
        match self {
            Design::Quad3 => 3,
            Design::QuadD { dim } => *dim,
            Design::Quad4Robust => 4,
            Design::Quad5Simple => 5,
            Design::AbsDep => 6,
        }
    }

    pub fn default_noise_sd(&self) -> f64 {
        match self {
            Design::Quad3 => 0.3,
            Design::QuadD { .. } => 0.2,
            Design::Quad4Robust => 0.1,
            Design::Quad5Simple => 1.0,
            Design::AbsDep => 0.1,
        }
    }

    pub fn theta0(&self) -> Result<IndexParameter> {
        let d = self.dim();
        let raw = match self {
            Design::Quad3 | Design::Quad4Robust | Design::Quad5Simple => vec![1.0; d],
            Design::QuadD { dim } => {
                if *dim < 2 {
                    return Err(Error::InvalidInput(format!("QuadD needs dim >= 2, got {dim}")));
                }
                let mut v = vec![0.0; d];
                v[0] = 2.0;
                v[1] = 1.0;
                v
            }
            Design::AbsDep => vec![1.3, -1.3, 1.0, -0.5, -0.5, -0.5],
        };
        normalize_theta(&raw)
    }

    /// The true link `m₀`.
    pub fn link(&self, s: f64) -> f64 {
        match self {
            Design::AbsDep => s.abs(),
            _ => s * s,
        }
    }

    fn draw_x(&self, rng: &mut SimRng, row: &mut [f64]) {
        match self {
            Design::QuadD { .. } => row.iter_mut().for_each(|v| *v = rng.uniform_in(-1.0, 5.0)),
            Design::AbsDep => {
                let x1 = rng.uniform_in(-1.0, 1.0);
                let x2 = rng.uniform_in(-1.0, 1.0);
                let z1 = rng.uniform_in(-1.0, 1.0);
                let z2 = rng.uniform_in(-1.0, 1.0);
                let logistic = |v: f64| 1.0 / (1.0 + (-v).exp());
                row[0] = x1;
                row[1] = x2;
                row[2] = 0.2 * x1 + 0.2 * (x2 + 2.0).powi(2) + 0.2 * z1;
                row[3] = 0.1 + 0.1 * (x1 + x2) + 0.3 * (x1 + 1.5).powi(2) + 0.2 * z2;
                row[4] = rng.bernoulli(logistic(x1));
                row[5] = rng.bernoulli(logistic(x2));
            }
            _ => row.iter_mut().for_each(|v| *v = rng.uniform_in(-1.0, 1.0)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub design: Design,
    pub n: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(design: Design, n: usize, seed: u64) -> Self {
        Self { design, n, noise_sd: design.default_noise_sd(), seed }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_n(self, n: usize) -> Self {
        Self { n, ..self }
    }
}

/// Draws a dataset from the design and returns it with the true index.
pub fn generate(spec: &ModelSpec) -> Result<(Dataset, IndexParameter)> {
    let theta0 = spec.design.theta0()?;
    let d = spec.design.dim();
    if !(spec.noise_sd >= 0.0 && spec.noise_sd.is_finite()) {
        return Err(Error::InvalidInput(format!("noise sd must be nonnegative, got {}", spec.noise_sd)));
    }
    let mut rng = SimRng::new(spec.seed);
    let mut x = DMatrix::zeros(spec.n, d);
    let mut y = DVector::zeros(spec.n);
    let mut row = vec![0.0; d];
    for i in 0..spec.n {
        spec.design.draw_x(&mut rng, &mut row);
        let s: f64 = row.iter().zip(theta0.as_slice()).map(|(a, b)| a * b).sum();
        y[i] = spec.design.link(s) + spec.noise_sd * rng.standard_normal();
        for (k, v) in row.iter().enumerate() {
            x[(i, k)] = *v;
        }
    }
    Ok((Dataset::new(x, y)?, theta0))
}

/// `Σᵢ |θ̂ᵢ − θ₀ᵢ| / d`.
pub fn theta_error(theta_hat: &[f64], theta0: &[f64]) -> f64 {
    let d = theta0.len();
    theta_hat.iter().zip(theta0).map(|(a, b)| (a - b).abs()).sum::<f64>() / d as f64
}

/// One replication of a coverage study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Replication {
    pub rep: usize,
    pub seed: u64,
    pub theta_hat: Option<Vec<f64>>,
    pub intervals: Option<Vec<(f64, f64)>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub model: ModelSpec,
    pub estimator: String,
    pub reps: usize,
    pub level: f64,
    pub replications: Vec<Replication>,
    /// Fraction of successful replications whose interval covers `θ₀ᵢ`, per coordinate.
    pub coverage: Vec<f64>,
    pub avg_length: Vec<f64>,
    pub mean_theta_error: f64,
    pub failures: usize,
    pub wall_clock_secs: f64,
}

fn check_reps(reps: usize) -> Result<()> {
    if reps == 0 {
        return Err(Error::InvalidInput("at least one replication is required".into()));
    }
    Ok(())
}

fn replicate(spec: &ModelSpec, cfg: &EstimatorConfig, rep: usize, level: Option<f64>) -> Replication {
    let seed = split_seed(spec.seed, rep as u64);
    let run = || -> Result<(Vec<f64>, Option<Vec<(f64, f64)>>)> {
        let (data, _) = generate(&spec.with_seed(seed))?;
        let res = fit(&data, &cfg.clone().with_seed(seed))?;
        let intervals = match level {
            Some(level) => {
                let cov = plugin_covariance(&res, &data)?;
                Some(confidence_intervals(&cov, &res.theta_hat, data.n(), level)?)
            }
            None => None,
        };
        Ok((res.theta_hat.to_vec(), intervals))
    };
    match run() {
        Ok((theta, intervals)) => Replication { rep, seed, theta_hat: Some(theta), intervals, error: None },
        Err(e) => Replication { rep, seed, theta_hat: None, intervals: None, error: Some(e.to_string()) },
    }
}

fn run_reps(spec: &ModelSpec, cfg: &EstimatorConfig, reps: usize, level: Option<f64>) -> Vec<Replication> {
    let mut out: Vec<Replication> = (0..reps).into_par_iter().map(|r| replicate(spec, cfg, r, level)).collect();
    out.sort_by_key(|r| r.rep);
    out
}

/// Fits, plug-in covariance and intervals for each replication.
pub fn coverage_experiment(spec: &ModelSpec, cfg: &EstimatorConfig, reps: usize, level: f64) -> Result<ExperimentReport> {
    check_reps(reps)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("level must lie in (0, 1), got {level}")));
    }
    let theta0 = spec.design.theta0()?;
    let d = theta0.dim();
    let start = Instant::now();
    let replications = run_reps(spec, cfg, reps, Some(level));
    let ok: Vec<&Replication> = replications.iter().filter(|r| r.intervals.is_some()).collect();
    let failures = reps - ok.len();
    let mut coverage = vec![f64::NAN; d];
    let mut avg_length = vec![f64::NAN; d];
    if !ok.is_empty() {
        for i in 0..d {
            let hits = ok
                .iter()
                .filter(|r| {
                    let (lo, hi) = r.intervals.as_ref().expect("filtered")[i];
                    lo <= theta0[i] && theta0[i] <= hi
                })
                .count();
            coverage[i] = hits as f64 / ok.len() as f64;
            let lengths: Vec<f64> = ok.iter().map(|r| r.intervals.as_ref().expect("filtered")[i]).map(|(lo, hi)| hi - lo).collect();
            avg_length[i] = mean(&lengths);
        }
    }
    let errors: Vec<f64> = ok.iter().map(|r| theta_error(r.theta_hat.as_ref().expect("filtered"), theta0.as_slice())).collect();
    Ok(ExperimentReport {
        model: *spec,
        estimator: cfg.kind.name().to_string(),
        reps,
        level,
        replications,
        coverage,
        avg_length,
        mean_theta_error: if errors.is_empty() { f64::NAN } else { mean(&errors) },
        failures,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QqRow {
    pub n: usize,
    pub rep: usize,
    pub sqrt_n_err: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QqReport {
    pub model: ModelSpec,
    pub estimator: String,
    pub rows: Vec<QqRow>,
    /// `(n, sample variance of √n(θ̂₁ − θ₀₁))`.
    pub variance: Vec<(usize, f64)>,
    pub failures: usize,
    pub wall_clock_secs: f64,
}

/// `√n(θ̂₁ − θ₀₁)` per replication and sample size. Sample size `n` uses master seed `split_seed(seed, n)`.
pub fn qq_experiment(spec: &ModelSpec, cfg: &EstimatorConfig, reps: usize, ns: &[usize]) -> Result<QqReport> {
    check_reps(reps)?;
    let theta0 = spec.design.theta0()?;
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut variance = Vec::new();
    let mut failures = 0;
    for &n in ns {
        let sub = spec.with_n(n).with_seed(split_seed(spec.seed, n as u64));
        let reps_out = run_reps(&sub, cfg, reps, None);
        let mut errs = Vec::new();
        for r in reps_out {
            match r.theta_hat {
                Some(theta) => {
                    let e = (n as f64).sqrt() * (theta[0] - theta0[0]);
                    errs.push(e);
                    rows.push(QqRow { n, rep: r.rep, sqrt_n_err: e });
                }
                None => failures += 1,
            }
        }
        variance.push((n, sample_variance(&errs)));
    }
    Ok(QqReport {
        model: *spec,
        estimator: cfg.kind.name().to_string(),
        rows,
        variance,
        failures,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Tuning grid exponents `T` for `λ = e^{−T/2} n^{−2/5}`.
pub const LAMBDA_GRID_T: [f64; 6] = [0.0, 0.7, 1.0, 2.0, 5.0, 7.0];

/// Lipschitz bounds of the tuning sweep.
pub const LIPSCHITZ_GRID: [f64; 5] = [3.0, 4.0, 5.0, 7.0, 10.0];

/// `(T, e^{−T/2} n^{−2/5})` for every `T` in [`LAMBDA_GRID_T`].
pub fn lambda_grid(n: usize) -> Vec<(f64, f64)> {
    LAMBDA_GRID_T.iter().map(|&t| (t, (-t / 2.0).exp() * (n as f64).powf(-0.4))).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub estimator: String,
    /// Tuning value (λ or L) where applicable.
    pub tuning: Option<f64>,
    pub errors: Vec<f64>,
    pub mean_theta_error: f64,
    pub failures: usize,
}

/// Mean θ-error over replications; replication seeds do not depend on `cfg`, so
/// different configurations are compared on the same datasets.
pub fn theta_error_experiment(spec: &ModelSpec, cfg: &EstimatorConfig, reps: usize, tuning: Option<f64>) -> Result<ErrorSummary> {
    check_reps(reps)?;
    let theta0 = spec.design.theta0()?;
    let out = run_reps(spec, cfg, reps, None);
    let errors: Vec<f64> = out.iter().filter_map(|r| r.theta_hat.as_ref()).map(|t| theta_error(t, theta0.as_slice())).collect();
    Ok(ErrorSummary {
        estimator: cfg.kind.name().to_string(),
        tuning,
        failures: reps - errors.len(),
        mean_theta_error: if errors.is_empty() { f64::NAN } else { mean(&errors) },
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_error_examples() {
        assert_eq!(theta_error(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
        assert_eq!(theta_error(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert!((theta_error(&[0.8, 0.6], &[0.6, 0.8]) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = ModelSpec::new(Design::AbsDep, 50, 11);
        let (a, ta) = generate(&spec).unwrap();
        let (b, tb) = generate(&spec).unwrap();
        assert_eq!(a.x(), b.x());
        assert_eq!(a.y(), b.y());
        assert_eq!(ta, tb);
        let (c, _) = generate(&spec.with_seed(12)).unwrap();
        assert_ne!(a.y(), c.y());
    }

    #[test]
    fn true_indices_are_unit() {
        for d in [Design::Quad3, Design::QuadD { dim: 10 }, Design::Quad4Robust, Design::Quad5Simple, Design::AbsDep] {
            let t = d.theta0().unwrap();
            let norm: f64 = t.as_slice().iter().map(|v| v * v).sum();
            assert!((norm - 1.0).abs() < 1e-14);
            assert_eq!(t.dim(), d.dim());
        }
        assert!(Design::QuadD { dim: 1 }.theta0().is_err());
    }

    #[test]
    fn lambda_grid_endpoints() {
        let g = lambda_grid(500);
        assert_eq!(g.len(), 6);
        assert!((g[0].1 - 500f64.powf(-0.4)).abs() < 1e-15);
        assert!((g[5].1 - (-3.5f64).exp() * 500f64.powf(-0.4)).abs() < 1e-15);
    }

    #[test]
    fn zero_reps_rejected() {
        let spec = ModelSpec::new(Design::Quad3, 50, 1);
        let cfg = EstimatorConfig::new(crate::driver::EstimatorKind::CvxLse);
        assert!(coverage_experiment(&spec, &cfg, 0, 0.95).is_err());
        assert!(qq_experiment(&spec, &cfg, 0, &[50]).is_err());
    }
}
