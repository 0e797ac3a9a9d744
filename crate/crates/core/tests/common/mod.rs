//! Independent reference solvers used to check the production kernels.
#![allow(dead_code)]

use cvxsim::rng::SimRng;
use nalgebra::{DMatrix, DVector};

/// Dense inequality system `a x ≥ b`.
pub struct Ineq {
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
}

/// Convexity rows in raw slope form: `(m₃ − m₂)/g₂ − (m₂ − m₁)/g₁ ≥ 0`.
pub fn convexity_ineq(t: &[f64]) -> Ineq {
    let m = t.len();
    let k = m.saturating_sub(2);
    let mut a = DMatrix::zeros(k, m);
    for i in 0..k {
        let (g1, g2) = (t[i + 1] - t[i], t[i + 2] - t[i + 1]);
        a[(i, i)] = 1.0 / g1;
        a[(i, i + 1)] = -1.0 / g1 - 1.0 / g2;
        a[(i, i + 2)] = 1.0 / g2;
    }
    Ineq { a, b: vec![0.0; k] }
}

/// Convexity plus `slope₁ ≥ −L` and `slope_last ≤ L`.
pub fn lipschitz_ineq(t: &[f64], l: f64) -> Ineq {
    let m = t.len();
    let conv = convexity_ineq(t);
    let k = conv.a.nrows() + 2;
    let mut a = DMatrix::zeros(k, m);
    let mut b = vec![0.0; k];
    let g0 = t[1] - t[0];
    a[(0, 0)] = -1.0 / g0;
    a[(0, 1)] = 1.0 / g0;
    b[0] = -l;
    for i in 0..conv.a.nrows() {
        for j in 0..m {
            a[(i + 1, j)] = conv.a[(i, j)];
        }
    }
    let gl = t[m - 1] - t[m - 2];
    a[(k - 1, m - 2)] = 1.0 / gl;
    a[(k - 1, m - 1)] = -1.0 / gl;
    b[k - 1] = -l;
    Ineq { a, b }
}

/// Minimizes `Σ w (y − x)²` subject to `cons` by enumerating every candidate active set.
///
/// The optimum is the equality-constrained minimizer of its own active face, so
/// the feasible candidate with the smallest objective is the solution.
pub fn brute_force_wls(y: &[f64], w: &[f64], cons: &Ineq) -> Vec<f64> {
    let m = y.len();
    let k = cons.a.nrows();
    assert!(k <= 12, "enumeration is exponential in the number of constraints");
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1u32 << k) {
        let rows: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let s = rows.len();
        // KKT: [2W  −A_Sᵀ; A_S 0] [x; μ] = [2Wy; b_S]
        let dim = m + s;
        let mut kkt = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        for i in 0..m {
            kkt[(i, i)] = 2.0 * w[i];
            rhs[i] = 2.0 * w[i] * y[i];
        }
        for (r, &ci) in rows.iter().enumerate() {
            for j in 0..m {
                kkt[(j, m + r)] = -cons.a[(ci, j)];
                kkt[(m + r, j)] = cons.a[(ci, j)];
            }
            rhs[m + r] = cons.b[ci];
        }
        let Ok(sol) = kkt.clone().svd(true, true).solve(&rhs, 1e-13) else { continue };
        if (&kkt * &sol - &rhs).amax() > 1e-8 * (1.0 + rhs.amax()) {
            continue;
        }
        let x: Vec<f64> = sol.iter().take(m).copied().collect();
        let xv = DVector::from_column_slice(&x);
        let slack = &cons.a * &xv - DVector::from_column_slice(&cons.b);
        let scale = 1.0 + cons.a.amax() * xv.amax();
        if slack.min() < -1e-9 * scale {
            continue;
        }
        let obj: f64 = (0..m).map(|i| w[i] * (y[i] - x[i]).powi(2)).sum();
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, x));
        }
    }
    best.expect("feasible instance").1
}

/// Least-distance point `argmin |z|² s.t. G z ≥ h` by accelerated projected gradient
/// on the dual, followed by an exact solve on the identified active set.
pub fn ldp_projected_gradient(g: &DMatrix<f64>, h: &[f64]) -> Vec<f64> {
    let k = g.nrows();
    let gg = g * g.transpose();
    let lip = gg.symmetric_eigenvalues().max().max(1e-12);
    let step = 1.0 / lip;
    let hv = DVector::from_column_slice(h);
    let mut u = DVector::<f64>::zeros(k);
    let mut v = u.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        let grad = &hv - &gg * &v;
        let mut next = &v + step * grad;
        next.iter_mut().for_each(|x| *x = x.max(0.0));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        v = &next + ((t - 1.0) / t_next) * (&next - &u);
        u = next;
        t = t_next;
    }
    let z = g.transpose() * &u;
    let slack = g * &z - &hv;
    // Polish on the constraints that look active, accepting only a KKT point.
    for tol in [1e-9, 1e-7, 1e-5, 1e-3] {
        let active: Vec<usize> = (0..k).filter(|&i| slack[i] <= tol).collect();
        if let Some(p) = face_minimizer(g, h, &active) {
            return p;
        }
    }
    let active: Vec<usize> = (0..k).filter(|&i| u[i] > 1e-9).collect();
    face_minimizer(g, h, &active).unwrap_or_else(|| z.iter().copied().collect())
}

/// Minimum-norm point of `{G_A z = h_A}` when it is feasible and its multipliers are nonnegative.
fn face_minimizer(g: &DMatrix<f64>, h: &[f64], active: &[usize]) -> Option<Vec<f64>> {
    let k = g.nrows();
    if active.is_empty() {
        let ok = h.iter().all(|&v| v <= 1e-12);
        return ok.then(|| vec![0.0; g.ncols()]);
    }
    let ga = DMatrix::from_fn(active.len(), g.ncols(), |r, c| g[(active[r], c)]);
    let ha = DVector::from_fn(active.len(), |r, _| h[active[r]]);
    let mu = (&ga * ga.transpose()).svd(true, true).solve(&ha, 1e-13).ok()?;
    let p = ga.transpose() * &mu;
    if (&ga * &p - &ha).amax() > 1e-9 {
        return None;
    }
    let feasible = (0..k).all(|i| (g.row(i) * &p)[0] >= h[i] - 1e-9);
    (feasible && mu.min() >= -1e-9).then(|| p.iter().copied().collect())
}

/// Composite Simpson rule with at most `step` spacing.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, step: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut n = ((b - a) / step).ceil() as usize;
    if n % 2 == 1 {
        n += 1;
    }
    n = n.max(2);
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

/// `∫ M Mᵀ 1{αᵀM > 0}` by Simpson's rule on pieces split at knots and at the
/// sign changes of `αᵀM` (located by bisection on basis evaluations).
pub fn t_matrix_quadrature(alpha: &[f64], t: &[f64], step: f64) -> DMatrix<f64> {
    let k = alpha.len();
    let curv = |s: f64| -> f64 {
        cvxsim::spline_link::basis_m(t, s).iter().zip(alpha).map(|(m, a)| m * a).sum()
    };
    let mut breaks = Vec::new();
    for w in t.windows(2) {
        breaks.push(w[0]);
        let (a, b) = (w[0], w[1]);
        let eps = 1e-14 * (b - a);
        let (fa, fb) = (curv(a + eps), curv(b - eps));
        if fa * fb < 0.0 {
            let (mut lo, mut hi) = (a + eps, b - eps);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if (curv(mid) > 0.0) == (fa > 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            breaks.push(0.5 * (lo + hi));
        }
    }
    breaks.push(*t.last().unwrap());
    let mut out = DMatrix::zeros(k, k);
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        if !(curv(mid) > 0.0) {
            continue;
        }
        for i in 0..k {
            for j in i..k {
                let v = simpson(
                    |s| {
                        let m = cvxsim::spline_link::basis_m(t, s);
                        m[i] * m[j]
                    },
                    a,
                    b,
                    step,
                );
                out[(i, j)] += v;
                if i != j {
                    out[(j, i)] += v;
                }
            }
        }
    }
    out
}

/// Strictly increasing random knots with gaps in `[lo_gap, hi_gap)`.
pub fn random_knots(rng: &mut SimRng, m: usize, lo_gap: f64, hi_gap: f64) -> Vec<f64> {
    let mut t = Vec::with_capacity(m);
    let mut s = rng.uniform_in(-2.0, 0.0);
    for _ in 0..m {
        t.push(s);
        s += rng.uniform_in(lo_gap, hi_gap);
    }
    t
}

/// Weighted least-squares line through `(t, y)`.
pub fn wls_line(t: &[f64], y: &[f64], w: &[f64]) -> (f64, f64) {
    let sw: f64 = w.iter().sum();
    let tb: f64 = t.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let yb: f64 = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxy: f64 = (0..t.len()).map(|i| w[i] * (t[i] - tb) * (y[i] - yb)).sum();
    let sxx: f64 = (0..t.len()).map(|i| w[i] * (t[i] - tb).powi(2)).sum();
    let slope = sxy / sxx;
    (yb - slope * tb, slope)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
