//! Descent in the index parameter along the Cayley retraction of the half-sphere.
//!
//! With `g = ∇f(α)` and `A = gαᵀ − αgᵀ`, the curve
//! `θ(τ) = (I + τA/2)⁻¹(I − τA/2)α` stays on the unit sphere and has
//! `θ′(0) = (αᵀg)α − g`, so `d f(θ(τ))/dτ = −|g − (αᵀg)α|² ≤ 0` at zero.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::index::{normalize_theta, Dataset, IndexParameter};
use crate::link::Link;
use crate::linalg::dot;

/// A point on the half-sphere together with the gradient of `f` there.
#[derive(Debug, Clone)]
pub struct CayleyState {
    pub alpha: IndexParameter,
    pub g: Vec<f64>,
}

impl CayleyState {
    pub fn new(alpha: IndexParameter, g: Vec<f64>) -> Result<Self> {
        if g.len() != alpha.dim() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("gradient must be finite and match the index dimension".into()));
        }
        Ok(Self { alpha, g })
    }

    fn ag(&self) -> f64 {
        dot(self.alpha.as_slice(), &self.g)
    }

    /// `|g|² − (αᵀg)²`, computed as the squared tangent component.
    fn tangent_sq(&self) -> f64 {
        let ag = self.ag();
        self.alpha.as_slice().iter().zip(&self.g).map(|(a, g)| (g - ag * a).powi(2)).sum()
    }
}

/// Line-search settings for [`descend_theta`].
#[derive(Debug, Clone, Copy)]
pub struct DescentOptions {
    /// Grid points per sign of τ.
    pub grid: usize,
    /// Cap on |τ| when the feasible interval is unbounded.
    pub tau_max: f64,
    pub golden_iters: usize,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self { grid: 25, tau_max: 1e3, golden_iters: 20 }
    }
}

/// First coordinate substituted for an exact zero before stepping.
const BOUNDARY_NUDGE: f64 = 1e-6;

/// Mean squared residual `(1/n) Σ (y_i − m(θᵀx_i))²` at an arbitrary direction.
pub fn link_objective<L: Link + ?Sized>(data: &Dataset, link: &L, theta: &[f64]) -> f64 {
    let proj = data.x() * DVector::from_column_slice(theta);
    let n = data.n() as f64;
    proj.iter().zip(data.y().iter()).map(|(s, y)| (y - link.eval(*s)).powi(2)).sum::<f64>() / n
}

/// `∇_θ (1/n) Σ (y_i − m(θᵀx_i))² = −(2/n) Σ r_i m′(θᵀx_i) x_i` for a fixed link.
pub fn link_gradient<L: Link + ?Sized>(data: &Dataset, link: &L, theta: &IndexParameter) -> Vec<f64> {
    let x = data.x();
    let proj = data.project(theta);
    let n = data.n() as f64;
    let mut g = vec![0.0; data.dim()];
    for (i, (s, y)) in proj.iter().zip(data.y().iter()).enumerate() {
        let w = -2.0 * (y - link.eval(*s)) * link.derivative(*s) / n;
        if w == 0.0 {
            continue;
        }
        for (k, gk) in g.iter_mut().enumerate() {
            *gk += w * x[(i, k)];
        }
    }
    g
}

/// The closed-form Cayley point `θ(τ)`.
pub fn cayley_point(state: &CayleyState, tau: f64) -> Result<Vec<f64>> {
    let ag = state.ag();
    let s = state.tangent_sq();
    let denom = 1.0 + tau * tau * s / 4.0;
    if !(denom > 0.0 && denom.is_finite()) {
        return Err(Error::InvalidStep(denom));
    }
    let ca = (1.0 - tau * tau * s / 4.0 + tau * ag) / denom;
    let cg = tau / denom;
    Ok(state.alpha.as_slice().iter().zip(&state.g).map(|(a, g)| ca * a - cg * g).collect())
}

/// Interval of τ keeping the first coordinate of `θ(τ)` nonnegative, capped at `±tau_max`.
pub fn feasible_tau_interval(state: &CayleyState, tau_max: f64) -> Result<(f64, f64)> {
    let a1 = state.alpha[0];
    if !(a1 > 0.0) {
        return Err(Error::BoundaryPoint);
    }
    // (τ²/4)[(αᵀg)² − |g|²] + τ(αᵀg − g₁/α₁) + 1 ≥ 0, with a nonpositive leading term.
    let qa = -state.tangent_sq() / 4.0;
    let qb = state.ag() - state.g[0] / a1;
    let scale = dot(&state.g, &state.g).max(f64::MIN_POSITIVE);
    let (lo, hi) = if qa.abs() <= 1e-15 * scale {
        if qb > 0.0 {
            (-1.0 / qb, f64::INFINITY)
        } else if qb < 0.0 {
            (f64::NEG_INFINITY, -1.0 / qb)
        } else {
            (f64::NEG_INFINITY, f64::INFINITY)
        }
    } else {
        let disc = (qb * qb - 4.0 * qa).sqrt();
        let q = -0.5 * (qb + if qb >= 0.0 { disc } else { -disc });
        let (r1, r2) = (q / qa, 1.0 / q);
        (r1.min(r2), r1.max(r2))
    };
    Ok((lo.max(-tau_max), hi.min(tau_max)))
}

/// Clamps a rounding-level negative first coordinate to zero and renormalizes.
fn to_half_sphere(mut v: Vec<f64>) -> Result<IndexParameter> {
    if v[0] < 0.0 && v[0] > -1e-10 {
        v[0] = 0.0;
    }
    normalize_theta(&v)
}

/// One monotone descent step in θ for the fixed link.
///
/// Searches τ on a geometric grid in both directions of the feasible interval,
/// refines the best grid point by golden section, and returns `theta` unchanged
/// unless the objective strictly decreases.
pub fn descend_theta<L: Link + ?Sized>(
    data: &Dataset,
    link: &L,
    theta: &IndexParameter,
    opts: &DescentOptions,
) -> Result<IndexParameter> {
    if opts.grid < 3 {
        return Err(Error::InvalidInput(format!("line-search grid needs at least 3 points, got {}", opts.grid)));
    }
    let f0 = link_objective(data, link, theta.as_slice());
    let start = if theta[0] == 0.0 && theta.dim() > 1 {
        let mut v = theta.to_vec();
        v[0] = BOUNDARY_NUDGE;
        normalize_theta(&v)?
    } else {
        theta.clone()
    };
    let g = link_gradient(data, link, &start);
    let state = CayleyState::new(start, g)?;
    if state.tangent_sq() == 0.0 {
        return Ok(theta.clone());
    }
    let (lo, hi) = feasible_tau_interval(&state, opts.tau_max)?;

    let f = |tau: f64| -> f64 {
        match cayley_point(&state, tau) {
            Ok(p) if p[0] >= -1e-10 => link_objective(data, link, &p),
            _ => f64::INFINITY,
        }
    };

    let ratio = (1e-8f64).powf(1.0 / (opts.grid - 1) as f64);
    let mut taus = vec![0.0];
    for (bound, sign) in [(hi, 1.0), (-lo, -1.0)] {
        if bound > 0.0 {
            let mut tau = bound;
            for _ in 0..opts.grid {
                taus.push(sign * tau);
                tau *= ratio;
            }
        }
    }
    taus.sort_by(f64::total_cmp);
    let values: Vec<f64> = taus.iter().map(|&t| if t == 0.0 { f0 } else { f(t) }).collect();
    let best = (0..taus.len()).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    let (mut best_tau, mut best_f) = (taus[best], values[best]);

    // Golden-section refinement between the neighbours of the best grid point.
    let (mut a, mut b) = (taus[best.saturating_sub(1)], taus[(best + 1).min(taus.len() - 1)]);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..opts.golden_iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
        for (t, v) in [(c, fc), (d, fd)] {
            if v < best_f {
                best_tau = t;
                best_f = v;
            }
        }
    }

    if !(best_f < f0) || best_tau == 0.0 {
        return Ok(theta.clone());
    }
    let candidate = to_half_sphere(cayley_point(&state, best_tau)?)?;
    // Renormalization can move the objective by rounding; keep the guarantee exact.
    if link_objective(data, link, candidate.as_slice()) < f0 {
        Ok(candidate)
    } else {
        Ok(theta.clone())
    }
}
