//! Plug-in covariance and confidence intervals for the index parameter.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::driver::FitResult;
use crate::error::{Error, Result};
use crate::index::{perp_basis, Dataset, IndexParameter, PerpBasis};
use crate::link::Link;
use crate::stats::{inverse_normal_cdf, sample_variance};

/// Largest admissible condition number of the empirical information matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Kernel weights beyond this many bandwidths are dropped.
const KERNEL_CUTOFF: f64 = 8.0;

/// Nadaraya–Watson estimate of `u ↦ E[X | θᵀX = u]` with a Gaussian kernel.
#[derive(Debug, Clone)]
pub struct ConditionalMean {
    /// Sorted index values.
    u: Vec<f64>,
    /// Covariate rows in the order of `u`.
    x: Vec<Vec<f64>>,
    bandwidth: f64,
}

impl ConditionalMean {
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Smoothed covariate mean at `u`, clamped to the observed index range.
    pub fn eval(&self, u: f64) -> Vec<f64> {
        let n = self.u.len();
        let u = u.clamp(self.u[0], self.u[n - 1]);
        let reach = KERNEL_CUTOFF * self.bandwidth;
        let lo = self.u.partition_point(|&v| v < u - reach);
        let hi = self.u.partition_point(|&v| v <= u + reach);
        let d = self.x[0].len();
        let mut acc = vec![0.0; d];
        let mut total = 0.0;
        for k in lo..hi {
            let z = (self.u[k] - u) / self.bandwidth;
            let w = (-0.5 * z * z).exp();
            total += w;
            for (a, xv) in acc.iter_mut().zip(&self.x[k]) {
                *a += w * xv;
            }
        }
        // The nearest point always lies inside the window, so total > 0.
        acc.iter_mut().for_each(|a| *a /= total);
        acc
    }
}

/// Rule-of-thumb bandwidth `1.06 · sd(θᵀX) · n^(−1/5)`.
pub fn default_bandwidth(index_values: &[f64]) -> f64 {
    let n = index_values.len() as f64;
    1.06 * sample_variance(index_values).sqrt() * n.powf(-0.2)
}

pub fn estimate_h(data: &Dataset, theta: &IndexParameter, bandwidth: Option<f64>) -> Result<ConditionalMean> {
    let proj = data.project(theta);
    let bandwidth = match bandwidth {
        Some(b) => b,
        None => {
            if data.n() < 10 {
                return Err(Error::InvalidInput("default bandwidth needs at least 10 observations".into()));
            }
            default_bandwidth(&proj)
        }
    };
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidInput(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let mut order: Vec<usize> = (0..data.n()).collect();
    order.sort_by(|&a, &b| proj[a].total_cmp(&proj[b]));
    let x = data.x();
    Ok(ConditionalMean {
        u: order.iter().map(|&i| proj[i]).collect(),
        x: order.iter().map(|&i| x.row(i).iter().copied().collect()).collect(),
        bandwidth,
    })
}

/// `ℓ(y, x) = (y − m(θᵀx)) m′(θᵀx) Hᵀ{x − h(θᵀx)}` at the fitted `(θ̂, m̂)`.
pub fn score_ell(fit: &FitResult, h: &ConditionalMean, basis: &PerpBasis, x: &[f64], y: f64) -> Vec<f64> {
    let s: f64 = fit.theta_hat.as_slice().iter().zip(x).map(|(a, b)| a * b).sum();
    let factor = (y - fit.link.eval(s)) * fit.link.derivative(s);
    let centered: Vec<f64> = x.iter().zip(h.eval(s)).map(|(xi, hi)| xi - hi).collect();
    let c = DVector::from_vec(centered);
    (basis.matrix().transpose() * c).iter().map(|v| factor * v).collect()
}

/// `Σ̂ = σ̂⁴ H [(1/n) Σ ℓℓᵀ]⁻¹ Hᵀ` together with its ingredients.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    pub sigma: DMatrix<f64>,
    pub sigma_sq_hat: f64,
    pub basis: PerpBasis,
    /// Whether intervals can be formed (false only if the estimate is degenerate zero).
    pub level_ready: bool,
}

pub fn plugin_covariance(fit: &FitResult, data: &Dataset) -> Result<CovarianceEstimate> {
    let h = estimate_h(data, &fit.theta_hat, None)?;
    plugin_covariance_with(fit, data, &h, perp_basis(&fit.theta_hat))
}

/// As [`plugin_covariance`] with an explicit smoother and orthonormal basis.
pub fn plugin_covariance_with(
    fit: &FitResult,
    data: &Dataset,
    h: &ConditionalMean,
    basis: PerpBasis,
) -> Result<CovarianceEstimate> {
    let (n, d) = (data.n(), data.dim());
    if d != fit.theta_hat.dim() {
        return Err(Error::InvalidInput("fit and data dimensions differ".into()));
    }
    if n <= d {
        return Err(Error::InvalidInput(format!("need more observations ({n}) than covariates ({d})")));
    }
    let proj = data.project(&fit.theta_hat);
    let sigma_sq_hat = proj
        .iter()
        .zip(data.y().iter())
        .map(|(s, y)| (y - fit.link.eval(*s)).powi(2))
        .sum::<f64>()
        / n as f64;
    if sigma_sq_hat == 0.0 || d == 1 {
        return Ok(CovarianceEstimate { sigma: DMatrix::zeros(d, d), sigma_sq_hat, basis, level_ready: true });
    }
    let mut info = DMatrix::zeros(d - 1, d - 1);
    let x = data.x();
    for i in 0..n {
        let row: Vec<f64> = x.row(i).iter().copied().collect();
        let l = DVector::from_vec(score_ell(fit, h, &basis, &row, data.y()[i]));
        info += &l * l.transpose();
    }
    info /= n as f64;
    let eig = SymmetricEigen::new(info);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= max / MAX_CONDITION {
        let cond = if min > 0.0 { max / min } else { f64::INFINITY };
        return Err(Error::SingularInformation(cond));
    }
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v));
    let inv = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
    let hm = basis.matrix();
    let raw = hm * inv * hm.transpose() * (sigma_sq_hat * sigma_sq_hat);
    let sigma = (&raw + raw.transpose()) * 0.5;
    Ok(CovarianceEstimate { sigma, sigma_sq_hat, basis, level_ready: true })
}

/// Intervals `θ̂_i ∓ z·(Σ̂_ii / n)^{1/2}` with `z` the upper `(1 − level)/2` normal quantile.
pub fn confidence_intervals(
    cov: &CovarianceEstimate,
    theta_hat: &IndexParameter,
    n: usize,
    level: f64,
) -> Result<Vec<(f64, f64)>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("level must lie in (0, 1), got {level}")));
    }
    if n == 0 || cov.sigma.nrows() != theta_hat.dim() {
        return Err(Error::InvalidInput("covariance does not match the index parameter".into()));
    }
    let z = inverse_normal_cdf(1.0 - (1.0 - level) / 2.0);
    (0..theta_hat.dim())
        .map(|i| {
            let v = cov.sigma[(i, i)];
            if v < -1e-8 {
                return Err(Error::InvalidInput(format!("negative variance {v} on the diagonal")));
            }
            let half = z * (v.max(0.0) / n as f64).sqrt();
            Ok((theta_hat[i] - half, theta_hat[i] + half))
        })
        .collect()
}
