//! Nonnegative least squares, least distance programming, and linearly
//! constrained weighted least squares.
//!
//! The chain is `min Σ w_j (ybar_j − m_j)²  s.t. A m ≥ b`  →  (with
//! `z = Q^{1/2}(m − ybar)`) `min |z|²  s.t. G z ≥ h`  →  `min |E u − ℓ|, u ⪰ 0`
//! where `E = [Gᵀ; hᵀ]` and `ℓ = e_last`. The NNLS step is an active-set
//! (Lawson–Hanson) method. For constraint rows with short contiguous support
//! sorted by first column, the passive-set subproblems reduce to banded
//! Gram systems and each solve costs `O(k)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::index::SortedProjection;
use crate::linalg::{dot, solve_refined, SymBand};

/// Default dual-feasibility tolerance for [`nnls`].
pub const DEFAULT_NNLS_TOL: f64 = 1e-10;

/// One matrix row with nonzeros confined to `start .. start + coefs.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub start: usize,
    pub coefs: Vec<f64>,
}

impl SparseRow {
    pub fn new(start: usize, coefs: Vec<f64>) -> Self {
        Self { start, coefs }
    }

    fn end(&self) -> usize {
        self.start + self.coefs.len()
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        dot(&self.coefs, &x[self.start..self.end()])
    }

    fn overlap_dot(&self, other: &SparseRow) -> f64 {
        let lo = self.start.max(other.start);
        let hi = self.end().min(other.end());
        (lo..hi).map(|c| self.coefs[c - self.start] * other.coefs[c - other.start]).sum()
    }
}

/// A row-wise sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMatrix {
    ncols: usize,
    rows: Vec<SparseRow>,
}

impl RowMatrix {
    pub fn new(ncols: usize, rows: Vec<SparseRow>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            if r.end() > ncols {
                return Err(Error::InvalidInput(format!("row {i} extends past column {ncols}")));
            }
            if r.coefs.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("row {i} has non-finite entries")));
            }
        }
        Ok(Self { ncols, rows })
    }

    /// Compresses each dense row to the span between its first and last nonzero.
    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let rows = (0..a.nrows())
            .map(|i| {
                let nz: Vec<usize> = (0..a.ncols()).filter(|&j| a[(i, j)] != 0.0).collect();
                match (nz.first(), nz.last()) {
                    (Some(&lo), Some(&hi)) => SparseRow::new(lo, (lo..=hi).map(|j| a[(i, j)]).collect()),
                    _ => SparseRow::new(0, Vec::new()),
                }
            })
            .collect();
        Self { ncols: a.ncols(), rows }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows.len(), self.ncols);
        for (i, r) in self.rows.iter().enumerate() {
            for (k, v) in r.coefs.iter().enumerate() {
                out[(i, r.start + k)] = *v;
            }
        }
        out
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.dot(x)).collect()
    }

    /// `Aᵀ u`.
    pub fn tr_mul_vec(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for (r, &ui) in self.rows.iter().zip(u) {
            if ui != 0.0 {
                for (k, v) in r.coefs.iter().enumerate() {
                    out[r.start + k] += v * ui;
                }
            }
        }
        out
    }

    fn scale_columns(&self, s: &[f64]) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|r| SparseRow::new(r.start, r.coefs.iter().enumerate().map(|(k, v)| v * s[r.start + k]).collect()))
            .collect();
        Self { ncols: self.ncols, rows }
    }

    fn starts_sorted(&self) -> bool {
        self.rows.windows(2).all(|w| w[0].start <= w[1].start)
    }
}

/// The feasible set `{m : A m ≥ b}`.
#[derive(Debug, Clone)]
pub struct LinearConstraints {
    pub a: RowMatrix,
    pub b: Vec<f64>,
}

impl LinearConstraints {
    pub fn new(a: RowMatrix, b: Vec<f64>) -> Result<Self> {
        if a.nrows() == 0 {
            return Err(Error::InvalidInput("at least one constraint is required".into()));
        }
        if a.nrows() != b.len() {
            return Err(Error::InvalidInput(format!("{} constraint rows but {} bounds", a.nrows(), b.len())));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("constraint bounds must be finite".into()));
        }
        Ok(Self { a, b })
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    /// Largest violation `max_i (b_i − A_i m)⁺`.
    pub fn max_violation(&self, m: &[f64]) -> f64 {
        self.a.mul_vec(m).iter().zip(&self.b).map(|(am, b)| (b - am).max(0.0)).fold(0.0, f64::max)
    }
}

/// What the active-set loop needs from `min |E u − l|`.
trait NnlsSystem {
    fn ncols(&self) -> usize;
    /// Dual vector `Eᵀ(l − E u)`.
    fn dual(&self, u: &[f64]) -> Vec<f64>;
    /// Least squares over the (sorted) passive columns; `None` when they are dependent.
    fn solve_passive(&self, passive: &[usize]) -> Option<Vec<f64>>;
    /// `‖Eᵀ l‖∞`, the scale of the dual vector.
    fn dual_scale(&self) -> f64;
}

fn dense_lstsq(e: &DMatrix<f64>, l: &DVector<f64>) -> Option<Vec<f64>> {
    let (p, k) = e.shape();
    if k == 0 {
        return Some(Vec::new());
    }
    if k > p {
        return None;
    }
    let qr = e.clone().qr();
    let r = qr.r();
    let rmax = r.diagonal().amax();
    if !(rmax > 0.0) || r.diagonal().iter().any(|d| d.abs() <= 1e-12 * rmax) {
        return None;
    }
    let mut qtl = l.clone();
    qr.q_tr_mul(&mut qtl);
    let rhs = qtl.rows(0, k).into_owned();
    r.solve_upper_triangular(&rhs).map(|x| x.as_slice().to_vec())
}

struct DenseSystem<'a> {
    e: &'a DMatrix<f64>,
    l: DVector<f64>,
}

impl NnlsSystem for DenseSystem<'_> {
    fn ncols(&self) -> usize {
        self.e.ncols()
    }

    fn dual(&self, u: &[f64]) -> Vec<f64> {
        let r = &self.l - self.e * DVector::from_column_slice(u);
        (self.e.transpose() * r).as_slice().to_vec()
    }

    fn solve_passive(&self, passive: &[usize]) -> Option<Vec<f64>> {
        let sub = self.e.select_columns(passive);
        dense_lstsq(&sub, &self.l)
    }

    fn dual_scale(&self) -> f64 {
        (self.e.transpose() * &self.l).amax()
    }
}

/// `E = [Gᵀ; hᵀ]`, `l = e_last` without forming `E`.
struct LdpSystem<'a> {
    g: &'a RowMatrix,
    h: &'a [f64],
    banded: bool,
}

impl LdpSystem<'_> {
    fn dense_passive(&self, passive: &[usize]) -> Option<Vec<f64>> {
        let m = self.g.ncols();
        let mut e = DMatrix::zeros(m + 1, passive.len());
        for (c, &i) in passive.iter().enumerate() {
            let row = &self.g.rows[i];
            for (k, v) in row.coefs.iter().enumerate() {
                e[(row.start + k, c)] = *v;
            }
            e[(m, c)] = self.h[i];
        }
        let mut l = DVector::zeros(m + 1);
        l[m] = 1.0;
        dense_lstsq(&e, &l)
    }

    /// Solves `(G_P G_Pᵀ) v = h_P`; then `u = v / (1 + h_Pᵀ v)` minimizes `|E_P u − l|`.
    fn gram_passive(&self, passive: &[usize]) -> Option<Vec<f64>> {
        let p = passive.len();
        let rows = &self.g.rows;
        let hp: Vec<f64> = passive.iter().map(|&i| self.h[i]).collect();
        let v = if self.banded {
            let mut bw = 0;
            let mut reach = vec![0usize; p];
            let mut b = 0;
            for a in 0..p {
                let end = rows[passive[a]].end();
                b = b.max(a);
                while b + 1 < p && rows[passive[b + 1]].start < end {
                    b += 1;
                }
                reach[a] = b;
                bw = bw.max(b - a);
            }
            let mut gram = SymBand::zeros(p, bw);
            for a in 0..p {
                let ra = &rows[passive[a]];
                for (bi, &pb) in passive.iter().enumerate().take(reach[a] + 1).skip(a) {
                    let v = ra.overlap_dot(&rows[pb]);
                    if v != 0.0 {
                        gram.add(bi, a, v);
                    }
                }
            }
            solve_refined(&gram, &hp).ok()?
        } else {
            let gram = DMatrix::from_fn(p, p, |a, b| rows[passive[a]].overlap_dot(&rows[passive[b]]));
            let chol = gram.cholesky()?;
            chol.solve(&DVector::from_vec(hp.clone())).as_slice().to_vec()
        };
        let denom = 1.0 + dot(&hp, &v);
        if !(denom.is_finite() && denom > 0.0) {
            return None;
        }
        Some(v.iter().map(|vi| vi / denom).collect())
    }
}

impl NnlsSystem for LdpSystem<'_> {
    fn ncols(&self) -> usize {
        self.g.nrows()
    }

    fn dual(&self, u: &[f64]) -> Vec<f64> {
        let gtu = self.g.tr_mul_vec(u);
        let last = 1.0 - dot(self.h, u);
        self.g.rows.iter().zip(self.h).map(|(r, hi)| hi * last - r.dot(&gtu)).collect()
    }

    fn solve_passive(&self, passive: &[usize]) -> Option<Vec<f64>> {
        self.gram_passive(passive).or_else(|| self.dense_passive(passive))
    }

    fn dual_scale(&self) -> f64 {
        self.h.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Active-set NNLS. Entering candidates tie-break to the lowest index.
fn active_set<S: NnlsSystem>(sys: &S, tol: f64, max_outer: usize) -> Result<Vec<f64>> {
    let q = sys.ncols();
    let threshold = tol * sys.dual_scale().max(1.0);
    let mut u = vec![0.0; q];
    let mut passive = vec![false; q];
    let mut rejected = vec![false; q];
    let mut outer = 0;
    loop {
        let w = sys.dual(&u);
        let mut enter: Option<usize> = None;
        for j in 0..q {
            if !passive[j] && !rejected[j] && w[j] > threshold && enter.is_none_or(|e| w[j] > w[e]) {
                enter = Some(j);
            }
        }
        let Some(j) = enter else {
            return Ok(u);
        };
        outer += 1;
        if outer > max_outer {
            return Err(Error::NnlsNonConvergence { iterations: max_outer, best: u });
        }
        passive[j] = true;
        let mut first = true;
        for _ in 0..=q {
            let set: Vec<usize> = (0..q).filter(|&i| passive[i]).collect();
            let Some(s) = sys.solve_passive(&set) else {
                if first {
                    passive[j] = false;
                    rejected[j] = true;
                    break;
                }
                return Err(Error::Singular("passive-set least squares became rank deficient".into()));
            };
            let entering = set.iter().position(|&i| i == j);
            if first && entering.is_some_and(|pos| s[pos] <= 0.0) {
                passive[j] = false;
                rejected[j] = true;
                break;
            }
            first = false;
            if s.iter().all(|&si| si > 0.0) {
                for (&i, &si) in set.iter().zip(&s) {
                    u[i] = si;
                }
                rejected.iter_mut().for_each(|r| *r = false);
                break;
            }
            let mut step = f64::INFINITY;
            let mut blocking = set[0];
            for (&i, &si) in set.iter().zip(&s) {
                if si <= 0.0 {
                    let ratio = u[i] / (u[i] - si);
                    if ratio < step {
                        step = ratio;
                        blocking = i;
                    }
                }
            }
            for (&i, &si) in set.iter().zip(&s) {
                u[i] += step * (si - u[i]);
            }
            u[blocking] = 0.0;
            for &i in &set {
                if u[i] <= 0.0 {
                    u[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
}

/// Minimizes `|E u − l|` over `u ⪰ 0`.
///
/// At return the dual `w = Eᵀ(l − E u)` satisfies `w_j ≤ τ` everywhere and
/// `|w_j| ≤ τ` on the support of `u`, with `τ = tol · max(1, ‖Eᵀl‖∞)`.
pub fn nnls(e: &DMatrix<f64>, l: &[f64], tol: f64) -> Result<Vec<f64>> {
    if e.nrows() == 0 || e.ncols() == 0 {
        return Err(Error::InvalidInput("NNLS needs a nonempty matrix".into()));
    }
    if e.nrows() != l.len() {
        return Err(Error::InvalidInput(format!("matrix has {} rows but target has {}", e.nrows(), l.len())));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    if e.iter().chain(l).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("NNLS inputs must be finite".into()));
    }
    let sys = DenseSystem { e, l: DVector::from_column_slice(l) };
    active_set(&sys, tol, 3 * e.ncols())
}

/// Minimizes `|z|²` subject to `G z ≥ h` through the NNLS dual.
pub fn ldp(g: &RowMatrix, h: &[f64]) -> Result<Vec<f64>> {
    if g.nrows() != h.len() {
        return Err(Error::InvalidInput(format!("{} constraint rows but {} bounds", g.nrows(), h.len())));
    }
    if g.nrows() == 0 {
        return Ok(vec![0.0; g.ncols()]);
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("LDP bounds must be finite".into()));
    }
    let sys = LdpSystem { g, h, banded: g.starts_sorted() };
    let u = active_set(&sys, DEFAULT_NNLS_TOL, 3 * g.nrows())?;
    // r = E u − ℓ: top block Gᵀu, last entry hᵀu − 1.
    let r_last = dot(h, &u) - 1.0;
    if r_last.abs() < 1e-12 {
        return Err(Error::Infeasible);
    }
    let z: Vec<f64> = g.tr_mul_vec(&u).iter().map(|ri| -ri / r_last).collect();
    let gz = g.mul_vec(&z);
    let scale = z.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    for (i, (gzi, hi)) in gz.iter().zip(h).enumerate() {
        let row_scale: f64 = g.rows[i].coefs.iter().map(|c| c.abs()).sum::<f64>();
        if hi - gzi > 1e-6 * (1.0 + hi.abs() + row_scale * scale) {
            return Err(Error::Infeasible);
        }
    }
    Ok(z)
}

/// Minimizes `Σ w_j (ybar_j − m_j)²` over `A m ≥ b`.
pub fn constrained_lsq(proj: &SortedProjection, cons: &LinearConstraints) -> Result<Vec<f64>> {
    let m = proj.len();
    if cons.a.ncols() != m {
        return Err(Error::InvalidInput(format!(
            "constraints act on {} values but the projection has {m} bins",
            cons.a.ncols()
        )));
    }
    let inv_sqrt_w: Vec<f64> = proj.w.iter().map(|w| 1.0 / w.sqrt()).collect();
    let g = cons.a.scale_columns(&inv_sqrt_w);
    let ay = cons.a.mul_vec(&proj.ybar);
    let h: Vec<f64> = cons.b.iter().zip(&ay).map(|(b, a)| b - a).collect();
    let z = ldp(&g, &h)?;
    Ok(proj.ybar.iter().zip(&z).zip(&inv_sqrt_w).map(|((y, z), s)| y + s * z).collect())
}
