//! Alternating minimization over (link, index) with multiple starts.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affine_link::{fit_convex, fit_lipschitz};
use crate::error::{Error, Result};
use crate::index::{normalize_theta, project_and_bin, Dataset, IndexParameter, SortedProjection, DEFAULT_BIN_TOL};
use crate::link::{FittedLink, Link};
use crate::rng::{split_seed, SimRng};
use crate::spline_link::{fit_penalized, SplineOptions};
use crate::stiefel::{descend_theta, DescentOptions};

/// Which convex link class is fitted at each index value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Convex, `lipschitz`-Lipschitz least squares.
    Llse { lipschitz: f64 },
    /// Convex penalized spline; `None` uses [`default_lambda`].
    Plse { lambda: Option<f64> },
    /// Convex least squares without a slope bound.
    CvxLse,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Llse { .. } => "llse",
            EstimatorKind::Plse { .. } => "plse",
            EstimatorKind::CvxLse => "cvxlse",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub max_outer_iter: usize,
    /// Stop once the relative criterion decrease falls below this.
    pub outer_tol: f64,
    pub n_starts: usize,
    pub bin_tol: f64,
    pub seed: u64,
    pub descent: DescentOptions,
    pub spline: SplineOptions,
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            max_outer_iter: 100,
            outer_tol: 1e-8,
            n_starts: 5,
            bin_tol: DEFAULT_BIN_TOL,
            seed: 0,
            descent: DescentOptions::default(),
            spline: SplineOptions::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_starts(mut self, n_starts: usize) -> Self {
        self.n_starts = n_starts;
        self
    }

    fn validate(&self) -> Result<()> {
        match self.kind {
            EstimatorKind::Llse { lipschitz } if !(lipschitz > 0.0 && lipschitz.is_finite()) => {
                return Err(Error::InvalidInput(format!("Lipschitz bound must be positive, got {lipschitz}")))
            }
            EstimatorKind::Plse { lambda: Some(l) } if !(l > 0.0 && l.is_finite()) => {
                return Err(Error::InvalidInput(format!("lambda must be positive, got {l}")))
            }
            _ => {}
        }
        if self.n_starts == 0 {
            return Err(Error::InvalidInput("at least one start is required".into()));
        }
        if !(self.bin_tol >= 0.0) {
            return Err(Error::InvalidInput("bin tolerance must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Outcome of an alternating run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: IndexParameter,
    pub link: FittedLink,
    /// `C(m^{(k)}, θ^{(k)})` per accepted outer iteration.
    pub criterion_trace: Vec<f64>,
    pub converged: bool,
    pub n_outer: usize,
    pub start_index: usize,
    /// Penalty parameter actually used (PLSE only).
    pub lambda: Option<f64>,
    /// Fitted value of each observation (the link value at its bin).
    pub fitted_values: Vec<f64>,
}

impl FitResult {
    pub fn criterion(&self) -> f64 {
        *self.criterion_trace.last().expect("trace is never empty")
    }
}

/// `0.1 · n^(−2/5)`.
pub fn default_lambda(n: usize) -> f64 {
    0.1 * (n as f64).powf(-0.4)
}

fn at_theta(theta: &IndexParameter) -> impl FnOnce(Error) -> Error + '_ {
    move |e| match e {
        Error::AtTheta { .. } => e,
        other => Error::AtTheta { theta: theta.to_vec(), source: Box::new(other) },
    }
}

fn fit_link(proj: &SortedProjection, kind: EstimatorKind, lambda: Option<f64>, cfg: &EstimatorConfig) -> Result<FittedLink> {
    Ok(match kind {
        EstimatorKind::Llse { lipschitz } => FittedLink::Affine(fit_lipschitz(proj, lipschitz)?),
        EstimatorKind::CvxLse => FittedLink::Affine(fit_convex(proj)?),
        EstimatorKind::Plse { .. } => {
            if proj.len() < 3 {
                return Err(Error::InvalidInput(format!("penalized fit needs at least 3 distinct index values, got {}", proj.len())));
            }
            FittedLink::Spline(fit_penalized(proj, lambda.expect("lambda resolved for plse"), &cfg.spline)?)
        }
    })
}

/// Per-observation fitted values and `(1/n) Σ (y_i − m_{bin(i)})² + λ²J²`.
fn criterion(data: &Dataset, proj: &SortedProjection, link: &FittedLink) -> (Vec<f64>, f64) {
    let values = link.values();
    let fitted: Vec<f64> = proj.map.iter().map(|&b| values[b]).collect();
    let sse: f64 = fitted.iter().zip(data.y().iter()).map(|(m, y)| (y - m).powi(2)).sum();
    let crit = sse / data.n() as f64 + link.penalty();
    (fitted, crit)
}

/// Algorithm: bin at θ, fit the link, record the criterion, take one descent step in θ.
pub fn fit_alternating(data: &Dataset, theta0: &IndexParameter, cfg: &EstimatorConfig) -> Result<FitResult> {
    cfg.validate()?;
    if theta0.dim() != data.dim() {
        return Err(Error::InvalidInput(format!("start has dimension {} but data has {}", theta0.dim(), data.dim())));
    }
    let lambda = match cfg.kind {
        EstimatorKind::Plse { lambda } => Some(lambda.unwrap_or_else(|| default_lambda(data.n()))),
        _ => None,
    };
    let mut theta = theta0.clone();
    let mut trace: Vec<f64> = Vec::new();
    let mut best: Option<(IndexParameter, FittedLink, Vec<f64>)> = None;
    let mut converged = false;
    let mut n_outer = 0;
    while n_outer < cfg.max_outer_iter {
        n_outer += 1;
        let proj = project_and_bin(data, &theta, cfg.bin_tol).map_err(at_theta(&theta))?;
        let link = fit_link(&proj, cfg.kind, lambda, cfg).map_err(at_theta(&theta))?;
        let (fitted, crit) = criterion(data, &proj, &link);
        if let Some(&prev) = trace.last() {
            if crit > prev {
                // Binning can make the refit marginally worse than the previous link; keep the previous pair.
                converged = true;
                break;
            }
            trace.push(crit);
            best = Some((theta.clone(), link, fitted));
            if prev - crit <= cfg.outer_tol * prev.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        } else {
            trace.push(crit);
            best = Some((theta.clone(), link, fitted));
        }
        if data.dim() == 1 {
            converged = true;
            break;
        }
        let link = &best.as_ref().expect("set above").1;
        let next = descend_theta(data, link, &theta, &cfg.descent).map_err(at_theta(&theta))?;
        if next == theta {
            converged = true;
            break;
        }
        theta = next;
    }
    let (theta_hat, link, fitted_values) = best.ok_or_else(|| Error::InvalidInput("max_outer_iter must be positive".into()))?;
    Ok(FitResult { theta_hat, link, criterion_trace: trace, converged, n_outer, start_index: 0, lambda, fitted_values })
}

/// Normalized slope vector of the least-squares linear fit with intercept.
pub fn ols_direction(data: &Dataset) -> Result<IndexParameter> {
    let (n, d) = (data.n(), data.dim());
    let design = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { data.x()[(i, j - 1)] });
    let coef = design
        .svd(true, true)
        .solve(data.y(), 1e-12)
        .map_err(|e| Error::Singular(e.to_string()))?;
    let slopes: Vec<f64> = coef.iter().skip(1).copied().collect();
    if slopes.iter().all(|s| *s == 0.0) {
        let mut e1 = vec![0.0; d];
        e1[0] = 1.0;
        return normalize_theta(&e1);
    }
    normalize_theta(&slopes)
}

/// Initial points: the OLS direction, then normalized Gaussian draws seeded per start.
pub fn initial_points(data: &Dataset, cfg: &EstimatorConfig) -> Result<Vec<IndexParameter>> {
    let d = data.dim();
    let mut starts = vec![ols_direction(data)?];
    for k in 1..cfg.n_starts {
        let mut rng = SimRng::new(split_seed(cfg.seed, k as u64));
        let v: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        starts.push(normalize_theta(&v)?);
    }
    Ok(starts)
}

/// Runs every start (concurrently) and keeps the lowest final criterion; ties go to the lowest index.
pub fn fit(data: &Dataset, cfg: &EstimatorConfig) -> Result<FitResult> {
    cfg.validate()?;
    let starts = initial_points(data, cfg)?;
    let runs: Vec<Result<FitResult>> = starts
        .par_iter()
        .enumerate()
        .map(|(k, theta0)| {
            fit_alternating(data, theta0, cfg).map(|mut r| {
                r.start_index = k;
                r
            })
        })
        .collect();
    let mut best: Option<FitResult> = None;
    let mut failures = Vec::new();
    for run in runs {
        match run {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.criterion() < b.criterion()) {
                    best = Some(r);
                }
            }
            Err(e) => failures.push(e.to_string()),
        }
    }
    best.ok_or(Error::AllStartsFailed(failures))
}

/// Link values at `θ̂ᵀx` for each row of `x_new`.
pub fn predict(fit: &FitResult, x_new: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x_new.ncols() != fit.theta_hat.dim() {
        return Err(Error::InvalidInput(format!(
            "expected {} covariates, got {}",
            fit.theta_hat.dim(),
            x_new.ncols()
        )));
    }
    let proj = x_new * DVector::from_column_slice(fit.theta_hat.as_slice());
    Ok(proj.iter().map(|s| fit.link.eval(*s)).collect())
}
