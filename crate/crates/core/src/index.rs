//! Data containers, the index parameter on the half-sphere, projection with
//! pre-binning, and orthonormal bases of the tangent hyperplane.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default merge tolerance for [`project_and_bin`].
pub const DEFAULT_BIN_TOL: f64 = 1e-6;

/// Covariate rows and responses.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::InvalidInput(format!(
                "{} covariate rows but {} responses",
                x.nrows(),
                y.len()
            )));
        }
        if x.nrows() < 3 {
            return Err(Error::InvalidInput(format!("need at least 3 observations, got {}", x.nrows())));
        }
        if x.ncols() < 1 {
            return Err(Error::InvalidInput("need at least one covariate".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("data contain non-finite values".into()));
        }
        Ok(Self { x, y })
    }

    /// Builds a dataset from covariate rows.
    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInput("ragged covariate rows".into()));
        }
        let x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::new(x, DVector::from_vec(y))
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Index values `θᵀx_i` in row order.
    pub fn project(&self, theta: &IndexParameter) -> Vec<f64> {
        let t = &self.x * DVector::from_column_slice(theta.as_slice());
        t.as_slice().to_vec()
    }
}

/// A unit vector with nonnegative first coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct IndexParameter(Vec<f64>);

impl IndexParameter {
    /// Wraps a vector that already satisfies the half-sphere invariants.
    pub fn from_unit(theta: Vec<f64>) -> Result<Self> {
        let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if theta.is_empty() || (norm - 1.0).abs() > 1e-12 || theta[0] < 0.0 {
            return Err(Error::InvalidInput(format!("{theta:?} is not on the half unit sphere")));
        }
        Ok(Self(theta))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.clone()
    }
}

impl TryFrom<Vec<f64>> for IndexParameter {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::from_unit(v)
    }
}

impl From<IndexParameter> for Vec<f64> {
    fn from(p: IndexParameter) -> Self {
        p.0
    }
}

impl std::ops::Index<usize> for IndexParameter {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Scales `v` to unit length and flips its sign so the first coordinate is nonnegative.
///
/// Vectors whose norm is already within 1e-14 of one are only sign-adjusted,
/// which makes the map exactly idempotent.
pub fn normalize_theta(v: &[f64]) -> Result<IndexParameter> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("index vector has non-finite entries".into()));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if v.is_empty() || norm == 0.0 {
        return Err(Error::InvalidInput("cannot normalize a zero vector".into()));
    }
    let sign = if v[0] < 0.0 { -1.0 } else { 1.0 };
    let out = if (norm - 1.0).abs() <= 1e-14 {
        v.iter().map(|x| sign * x).collect()
    } else {
        v.iter().map(|x| sign * x / norm).collect()
    };
    Ok(IndexParameter(out))
}

/// Sorted, tie-merged index values with per-bin mean responses and counts.
#[derive(Debug, Clone)]
pub struct SortedProjection {
    /// Bin locations, strictly increasing; each is the smallest index value in its bin.
    pub t: Vec<f64>,
    /// Mean response per bin.
    pub ybar: Vec<f64>,
    /// Number of observations per bin (the diagonal of the weight matrix).
    pub w: Vec<f64>,
    /// Bin of each original row.
    pub map: Vec<usize>,
}

impl SortedProjection {
    /// Builds a projection directly from bins; used by the link fitters and tests.
    pub fn from_bins(t: Vec<f64>, ybar: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if t.len() != ybar.len() || t.len() != w.len() || t.is_empty() {
            return Err(Error::InvalidInput("bin vectors must be nonempty and of equal length".into()));
        }
        if t.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(Error::InvalidInput("bin locations must be strictly increasing".into()));
        }
        if w.iter().any(|&wi| !(wi > 0.0)) {
            return Err(Error::InvalidInput("bin weights must be positive".into()));
        }
        if t.iter().chain(&ybar).chain(&w).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("bins contain non-finite values".into()));
        }
        let map = (0..t.len()).collect();
        Ok(Self { t, ybar, w, map })
    }

    /// Unit-weight bins.
    pub fn unweighted(t: Vec<f64>, ybar: Vec<f64>) -> Result<Self> {
        let w = vec![1.0; t.len()];
        Self::from_bins(t, ybar, w)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.w.iter().sum()
    }

    /// Weighted squared error `Σ w_j (ybar_j − m_j)²`.
    pub fn weighted_sse(&self, m: &[f64]) -> f64 {
        self.ybar.iter().zip(m).zip(&self.w).map(|((y, m), w)| w * (y - m) * (y - m)).sum()
    }
}

/// Sorts the index values and greedily merges runs spanning less than `tol` from their first point.
pub fn project_and_bin(data: &Dataset, theta: &IndexParameter, tol: f64) -> Result<SortedProjection> {
    if theta.dim() != data.dim() {
        return Err(Error::InvalidInput(format!(
            "index parameter has dimension {} but data have {} covariates",
            theta.dim(),
            data.dim()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("bin tolerance must be positive, got {tol}")));
    }
    let proj = data.project(theta);
    let y = data.y().as_slice();
    let mut order: Vec<usize> = (0..proj.len()).collect();
    order.sort_by(|&a, &b| proj[a].total_cmp(&proj[b]));

    let mut t = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    let mut w: Vec<f64> = Vec::new();
    let mut map = vec![0; proj.len()];
    let mut leader = f64::NEG_INFINITY;
    for &i in &order {
        if t.is_empty() || proj[i] - leader >= tol {
            leader = proj[i];
            t.push(leader);
            sums.push(0.0);
            w.push(0.0);
        }
        let j = t.len() - 1;
        sums[j] += y[i];
        w[j] += 1.0;
        map[i] = j;
    }
    if t.len() < 2 {
        return Err(Error::DegenerateProjection { theta: theta.to_vec() });
    }
    let ybar = sums.iter().zip(&w).map(|(s, c)| s / c).collect();
    Ok(SortedProjection { t, ybar, w, map })
}

/// A `d × (d−1)` matrix whose columns are an orthonormal basis of `{x : θᵀx = 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerpBasis(DMatrix<f64>);

impl PerpBasis {
    /// Validates an arbitrary candidate basis for `theta`.
    pub fn from_matrix(h: DMatrix<f64>, theta: &IndexParameter) -> Result<Self> {
        let d = theta.dim();
        if h.nrows() != d || h.ncols() + 1 != d {
            return Err(Error::InvalidInput(format!("basis must be {d} x {}", d.saturating_sub(1))));
        }
        let gram = h.transpose() * &h;
        let ortho = (gram - DMatrix::identity(d - 1, d - 1)).amax();
        let perp = (h.transpose() * DVector::from_column_slice(theta.as_slice())).amax();
        if ortho > 1e-10 || perp > 1e-10 {
            return Err(Error::InvalidInput("columns are not an orthonormal basis orthogonal to theta".into()));
        }
        Ok(Self(h))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

/// Householder reflection taking `e₁` to `θ`, applied to `e₂ … e_d`.
pub fn perp_basis(theta: &IndexParameter) -> PerpBasis {
    let th = theta.as_slice();
    let d = th.len();
    let rest_sq: f64 = th[1..].iter().map(|v| v * v).sum();
    let mut h = DMatrix::zeros(d, d.saturating_sub(1));
    if rest_sq == 0.0 {
        for j in 1..d {
            h[(j, j - 1)] = 1.0;
        }
        return PerpBasis(h);
    }
    // v = e₁ − θ, with 1 − θ₁ written without cancellation for unit θ.
    let mut v: Vec<f64> = th.iter().map(|x| -x).collect();
    v[0] = rest_sq / (1.0 + th[0]);
    let vv: f64 = v.iter().map(|x| x * x).sum();
    for j in 1..d {
        let coef = 2.0 * v[j] / vv;
        for i in 0..d {
            let e = if i == j { 1.0 } else { 0.0 };
            h[(i, j - 1)] = e - coef * v[i];
        }
    }
    PerpBasis(h)
}
