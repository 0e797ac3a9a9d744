//! Piecewise affine convex links: the Lipschitz-constrained fit and the
//! plain convex fit, both solved through [`crate::qp::constrained_lsq`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::SortedProjection;
use crate::qp::{constrained_lsq, LinearConstraints, RowMatrix, SparseRow};

/// Linear interpolation of `values` at `t`, extended by the boundary slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseAffineLink {
    t: Vec<f64>,
    values: Vec<f64>,
    lipschitz_bound: Option<f64>,
}

impl PiecewiseAffineLink {
    pub fn new(t: Vec<f64>, values: Vec<f64>, lipschitz_bound: Option<f64>) -> Result<Self> {
        if t.is_empty() || t.len() != values.len() {
            return Err(Error::InvalidInput("knots and values must be nonempty and of equal length".into()));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("knots must be strictly increasing".into()));
        }
        if t.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("knots and values must be finite".into()));
        }
        if let Some(l) = lipschitz_bound {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidInput(format!("Lipschitz bound must be positive, got {l}")));
            }
        }
        Ok(Self { t, values, lipschitz_bound })
    }

    pub fn knots(&self) -> &[f64] {
        &self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lipschitz_bound(&self) -> Option<f64> {
        self.lipschitz_bound
    }

    pub fn slopes(&self) -> Vec<f64> {
        self.t
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(t, m)| (m[1] - m[0]) / (t[1] - t[0]))
            .collect()
    }

    /// Segment index whose slope applies at `s` (right-continuous).
    fn segment(&self, s: f64) -> usize {
        let m = self.t.len();
        let j = self.t.partition_point(|&tk| tk <= s);
        j.saturating_sub(1).min(m - 2)
    }

    pub fn eval(&self, s: f64) -> f64 {
        if self.t.len() == 1 {
            return self.values[0];
        }
        let j = self.segment(s);
        let (t0, t1) = (self.t[j], self.t[j + 1]);
        let (m0, m1) = (self.values[j], self.values[j + 1]);
        if s == t0 {
            return m0;
        }
        m0 + (m1 - m0) * ((s - t0) / (t1 - t0))
    }

    /// Slope of the segment to the right of `s`; the last slope from `t_{m−1}` on.
    pub fn right_derivative(&self, s: f64) -> Result<f64> {
        if self.t.len() < 2 {
            return Err(Error::InvalidInput("a single-knot link has no slope".into()));
        }
        let j = self.segment(s);
        Ok((self.values[j + 1] - self.values[j]) / (self.t[j + 1] - self.t[j]))
    }

    /// Largest convexity (and, when bounded, Lipschitz) violation in slope units.
    pub fn max_constraint_violation(&self) -> f64 {
        let slopes = self.slopes();
        let mut worst = slopes.windows(2).map(|s| (s[0] - s[1]).max(0.0)).fold(0.0, f64::max);
        if let Some(l) = self.lipschitz_bound {
            worst = slopes.iter().map(|s| (s.abs() - l).max(0.0)).fold(worst, f64::max);
        }
        worst
    }
}

/// Convexity rows scaled to `g₂/(g₁+g₂)·m₁ − m₂ + g₁/(g₁+g₂)·m₃ ≥ 0`, which keeps
/// every coefficient in [−1, 1] whatever the knot spacing.
fn convexity_rows(t: &[f64]) -> Vec<SparseRow> {
    t.windows(3)
        .enumerate()
        .map(|(i, w)| {
            let (g1, g2) = (w[1] - w[0], w[2] - w[1]);
            let s = g1 + g2;
            SparseRow::new(i, vec![g2 / s, -1.0, g1 / s])
        })
        .collect()
}

fn convexity_constraints(t: &[f64]) -> Result<LinearConstraints> {
    let rows = convexity_rows(t);
    let k = rows.len();
    LinearConstraints::new(RowMatrix::new(t.len(), rows)?, vec![0.0; k])
}

/// The `m` constraints `−L ≤ slope₁ ≤ … ≤ slope_{m−1} ≤ L`, rows ordered by first column.
pub fn lipschitz_constraints(t: &[f64], lipschitz: f64) -> Result<LinearConstraints> {
    let m = t.len();
    if m < 2 {
        return Err(Error::InvalidInput("need at least two knots".into()));
    }
    let mut rows = Vec::with_capacity(m);
    let mut b = Vec::with_capacity(m);
    rows.push(SparseRow::new(0, vec![-1.0, 1.0]));
    b.push(-lipschitz * (t[1] - t[0]));
    rows.extend(convexity_rows(t));
    b.resize(m - 1, 0.0);
    rows.push(SparseRow::new(m - 2, vec![1.0, -1.0]));
    b.push(-lipschitz * (t[m - 1] - t[m - 2]));
    LinearConstraints::new(RowMatrix::new(m, rows)?, b)
}

/// Least squares convex `lipschitz`-Lipschitz fit at the bins.
pub fn fit_lipschitz(proj: &SortedProjection, lipschitz: f64) -> Result<PiecewiseAffineLink> {
    if proj.len() < 2 {
        return Err(Error::InvalidInput("need at least two bins".into()));
    }
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::InvalidInput(format!("Lipschitz bound must be positive, got {lipschitz}")));
    }
    // The convex fit is optimal whenever it already respects the slope bound.
    let convex = fit_convex(proj)?;
    let slopes = convex.slopes();
    if slopes[0] >= -lipschitz && slopes[slopes.len() - 1] <= lipschitz {
        return PiecewiseAffineLink::new(proj.t.clone(), convex.values().to_vec(), Some(lipschitz));
    }
    let cons = lipschitz_constraints(&proj.t, lipschitz)?;
    let values = constrained_lsq(proj, &cons)?;
    PiecewiseAffineLink::new(proj.t.clone(), values, Some(lipschitz))
}

/// Least squares convex fit at the bins. Two bins are fitted exactly.
pub fn fit_convex(proj: &SortedProjection) -> Result<PiecewiseAffineLink> {
    match proj.len() {
        0 | 1 => Err(Error::InvalidInput("need at least two bins".into())),
        2 => PiecewiseAffineLink::new(proj.t.clone(), proj.ybar.clone(), None),
        _ => {
            let values = constrained_lsq(proj, &convexity_constraints(&proj.t)?)?;
            PiecewiseAffineLink::new(proj.t.clone(), values, None)
        }
    }
}
