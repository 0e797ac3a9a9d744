//! Acceptance criteria, one pass/fail line each.

mod common;

use common::{
    brute_force_wls, convexity_ineq, ldp_projected_gradient, lipschitz_ineq, max_abs_diff, random_knots,
    t_matrix_quadrature, wls_line,
};
use cvxsim::affine_link::{fit_convex, fit_lipschitz};
use cvxsim::driver::{fit_alternating, initial_points};
use cvxsim::inference::{estimate_h, plugin_covariance_with};
use cvxsim::qp::{ldp, RowMatrix};
use cvxsim::rng::SimRng;
use cvxsim::simbench::{coverage_experiment, generate, lambda_grid, qq_experiment, theta_error_experiment, Design, ModelSpec};
use cvxsim::spline_link::{build_k, fit_penalized, fixed_point_residual, integral_t, SplineOptions};
use cvxsim::stiefel::{cayley_point, descend_theta, link_gradient, link_objective, CayleyState, DescentOptions};
use cvxsim::{
    normalize_theta, perp_basis, project_and_bin, EstimatorConfig, EstimatorKind, PerpBasis, SortedProjection,
};
use nalgebra::{DMatrix, DVector};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

fn random_bins(rng: &mut SimRng, m: usize) -> SortedProjection {
    let t = random_knots(rng, m, 0.05, 1.0);
    let shape = rng.uniform_in(-1.0, 1.0);
    let y: Vec<f64> = t.iter().map(|s| shape * s * s + rng.standard_normal()).collect();
    let w: Vec<f64> = (0..m).map(|_| 1.0 + (rng.uniform() * 3.0).floor()).collect();
    SortedProjection::from_bins(t, y, w).unwrap()
}

fn convex_bins(rng: &mut SimRng, m: usize) -> SortedProjection {
    let t = random_knots(rng, m, 0.01, 0.3);
    let c = rng.uniform_in(0.5, 2.0);
    let y: Vec<f64> = t.iter().map(|s| c * s * s + 0.1 * rng.standard_normal()).collect();
    let w: Vec<f64> = (0..m).map(|_| 1.0 + (rng.uniform() * 4.0).floor()).collect();
    SortedProjection::from_bins(t, y, w).unwrap()
}

fn criterion_1() -> Outcome {
    let targets = [
        (EstimatorKind::Llse { lipschitz: 4.0 }, 100, 0.91, 0.18),
        (EstimatorKind::Llse { lipschitz: 4.0 }, 500, 0.94, 0.08),
        (EstimatorKind::Plse { lambda: None }, 100, 0.92, 0.19),
        (EstimatorKind::Plse { lambda: None }, 500, 0.92, 0.08),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (kind, n, cov_target, len_target) in targets {
        let spec = ModelSpec::new(Design::Quad3, n, 2024 + n as u64);
        let r = coverage_experiment(&spec, &EstimatorConfig::new(kind), 200, 0.95).unwrap();
        let (cov, len) = (r.coverage[0], r.avg_length[0]);
        let ok = (cov - cov_target).abs() <= 0.05 && (len / len_target - 1.0).abs() <= 0.2;
        pass &= ok;
        parts.push(format!("{} n={n}: coverage {cov:.3}, length {len:.4}, failures {}", kind.name(), r.failures));
    }
    Outcome::new(pass, parts.join("; "))
}

fn criterion_2() -> Outcome {
    let spec = ModelSpec::new(Design::Quad3, 1000, 77);
    let q = qq_experiment(&spec, &EstimatorConfig::new(EstimatorKind::Plse { lambda: None }), 300, &[1000]).unwrap();
    let v = q.variance[0].1;
    Outcome::new((0.15..=0.30).contains(&v), format!("variance {v:.4} over {} fits, failures {}", q.rows.len(), q.failures))
}

fn criterion_3() -> Outcome {
    let mut rng = SimRng::new(3);
    let (mut worst_c, mut worst_l, mut worst_ldp): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..200 {
        let m = 3 + (rng.uniform() * 4.0) as usize;
        let proj = random_bins(&mut rng, m);
        let fit = fit_convex(&proj).unwrap();
        worst_c = worst_c.max(max_abs_diff(fit.values(), &brute_force_wls(&proj.ybar, &proj.w, &convexity_ineq(&proj.t))));
        let m = 2 + (rng.uniform() * 5.0) as usize;
        let proj = random_bins(&mut rng, m);
        let l = rng.uniform_in(0.2, 3.0);
        let fit = fit_lipschitz(&proj, l).unwrap();
        worst_l = worst_l.max(max_abs_diff(fit.values(), &brute_force_wls(&proj.ybar, &proj.w, &lipschitz_ineq(&proj.t, l))));
    }
    for _ in 0..200 {
        let k = 1 + (rng.uniform() * 6.0) as usize;
        let d = 1 + (rng.uniform() * 6.0) as usize;
        let g = DMatrix::from_fn(k, d, |_, _| rng.standard_normal());
        let z0 = DVector::from_fn(d, |_, _| rng.standard_normal());
        let gz = &g * &z0;
        let h: Vec<f64> = (0..k).map(|i| gz[i] - if rng.uniform() < 0.4 { 0.0 } else { rng.uniform() }).collect();
        let z = ldp(&RowMatrix::from_dense(&g), &h).unwrap();
        worst_ldp = worst_ldp.max(max_abs_diff(&z, &ldp_projected_gradient(&g, &h)));
    }
    let pass = worst_c <= 1e-6 && worst_l <= 1e-6 && worst_ldp <= 1e-6;
    Outcome::new(pass, format!("max deviation convex {worst_c:.2e}, lipschitz {worst_l:.2e}, ldp {worst_ldp:.2e}"))
}

fn criterion_4() -> Outcome {
    let mut rng = SimRng::new(4);
    let mut worst_res: f64 = 0.0;
    for _ in 0..100 {
        let m = 3 + (rng.uniform() * 98.0) as usize;
        let proj = convex_bins(&mut rng, m);
        let lambda = 10f64.powf(rng.uniform_in(-3.0, 0.0));
        let fit = fit_penalized(&proj, lambda, &SplineOptions::default()).unwrap();
        let res = fixed_point_residual(&proj, fit.alpha(), lambda).unwrap();
        let ky = build_k(&proj.t).unwrap().mul_vec(&proj.ybar);
        let scale = 1.0 + ky.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        worst_res = worst_res.max(res.iter().fold(0.0f64, |a, v| a.max(v.abs())) / scale);
    }
    let mut worst_line: f64 = 0.0;
    for _ in 0..10 {
        let proj = convex_bins(&mut rng, 25);
        let fit = fit_penalized(&proj, 1e6, &SplineOptions::default()).unwrap();
        let (a, b) = wls_line(&proj.t, &proj.ybar, &proj.w);
        let line: Vec<f64> = proj.t.iter().map(|s| a + b * s).collect();
        worst_line = worst_line.max(max_abs_diff(fit.values(), &line));
    }
    let mut worst_t: f64 = 0.0;
    for _ in 0..5 {
        let m = 4 + (rng.uniform() * 6.0) as usize;
        let t = random_knots(&mut rng, m, 0.1, 0.6);
        let alpha: Vec<f64> = (0..m - 2).map(|_| rng.standard_normal()).collect();
        let diff = (integral_t(&alpha, &t).unwrap() - t_matrix_quadrature(&alpha, &t, 1e-4)).amax();
        worst_t = worst_t.max(diff);
    }
    let pass = worst_res <= 1e-7 && worst_line <= 1e-4 && worst_t <= 1e-8;
    Outcome::new(pass, format!("relative residual {worst_res:.2e}, OLS-line gap {worst_line:.2e}, T quadrature gap {worst_t:.2e}"))
}

fn criterion_5() -> Outcome {
    let mut failures = Vec::new();
    let kinds = [EstimatorKind::Llse { lipschitz: 4.0 }, EstimatorKind::Plse { lambda: None }, EstimatorKind::CvxLse];

    // Nonincreasing traces and valid Cayley steps along every run.
    let mut fits = 0;
    for seed in 0..6u64 {
        let (data, _) = generate(&ModelSpec::new(Design::Quad3, 150, 500 + seed)).unwrap();
        for kind in kinds {
            let cfg = EstimatorConfig::new(kind).with_seed(seed);
            for theta0 in initial_points(&data, &cfg).unwrap() {
                let r = fit_alternating(&data, &theta0, &cfg).unwrap();
                fits += 1;
                if r.criterion_trace.windows(2).any(|w| w[1] > w[0] + 1e-10) {
                    failures.push(format!("trace increased for {}", kind.name()));
                }
            }
        }
    }

    let mut rng = SimRng::new(5);
    for _ in 0..50 {
        let m = 2 + (rng.uniform() * 60.0) as usize;
        let proj = random_bins(&mut rng, m);
        let n = proj.total_weight();
        for fit in [fit_convex(&proj).unwrap(), fit_lipschitz(&proj, 2.0).unwrap()] {
            let s: f64 = (0..m).map(|j| proj.w[j] * (proj.ybar[j] - fit.values()[j])).sum();
            if s.abs() > 1e-8 * n {
                failures.push(format!("residual sum {s:.2e}"));
            }
        }
    }

    for k in 0..40u64 {
        let (data, _) = generate(&ModelSpec::new(Design::Quad4Robust, 80, 600 + k)).unwrap();
        let start = normalize_theta(&(0..4).map(|_| rng.standard_normal()).collect::<Vec<_>>()).unwrap();
        let proj = project_and_bin(&data, &start, 1e-6).unwrap();
        let link = fit_penalized(&proj, 0.05, &SplineOptions::default()).unwrap();
        let next = descend_theta(&data, &link, &start, &DescentOptions::default()).unwrap();
        let norm: f64 = next.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 || next[0] < 0.0 {
            failures.push(format!("descent left the half sphere: {:?}", next.as_slice()));
        }
    }

    let mut worst_norm: f64 = 0.0;
    for _ in 0..1000 {
        let d = 2 + (rng.uniform() * 8.0) as usize;
        let mut a: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        a[0] = a[0].abs();
        let alpha = normalize_theta(&a).unwrap();
        let g: Vec<f64> = (0..d).map(|_| rng.standard_normal() * 10f64.powf(rng.uniform_in(-3.0, 3.0))).collect();
        let tau = rng.uniform_in(-1.0, 1.0) * 10f64.powf(rng.uniform_in(-4.0, 3.0));
        let p = cayley_point(&CayleyState::new(alpha, g).unwrap(), tau).unwrap();
        worst_norm = worst_norm.max((p.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs());
    }
    if worst_norm > 1e-12 {
        failures.push(format!("Cayley norm error {worst_norm:.2e}"));
    }

    let (data, _) = generate(&ModelSpec::new(Design::Quad3, 300, 700)).unwrap();
    let res = cvxsim::fit(&data, &EstimatorConfig::new(EstimatorKind::Plse { lambda: None })).unwrap();
    let h = estimate_h(&data, &res.theta_hat, None).unwrap();
    let base = perp_basis(&res.theta_hat);
    let reference = plugin_covariance_with(&res, &data, &h, base.clone()).unwrap().sigma;
    let mut worst_rot: f64 = 0.0;
    for _ in 0..100 {
        let r = DMatrix::from_fn(2, 2, |_, _| rng.standard_normal()).qr().q();
        let rotated = PerpBasis::from_matrix(base.matrix() * r, &res.theta_hat).unwrap();
        let sigma = plugin_covariance_with(&res, &data, &h, rotated).unwrap().sigma;
        worst_rot = worst_rot.max((&sigma - &reference).amax() / (1.0 + reference.amax()));
    }
    if worst_rot > 1e-8 {
        failures.push(format!("basis dependence {worst_rot:.2e}"));
    }

    for _ in 0..20 {
        let m = 5 + (rng.uniform() * 40.0) as usize;
        let proj = convex_bins(&mut rng, m);
        let fit = fit_penalized(&proj, 0.02, &SplineOptions::default()).unwrap();
        let (lo, hi) = (proj.t[0] - 0.5, proj.t[m - 1] + 0.5);
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=2000 {
            let s = lo + (hi - lo) * k as f64 / 2000.0;
            let d = fit.derivative(s);
            if fit.second_derivative(s) < 0.0 || d < prev - 1e-10 {
                failures.push(format!("spline convexity violated at {s}"));
                break;
            }
            prev = d;
        }
    }

    let detail = if failures.is_empty() {
        format!("{fits} runs, Cayley norm error {worst_norm:.1e}, basis dependence {worst_rot:.1e}")
    } else {
        failures.join("; ")
    };
    Outcome::new(failures.is_empty(), detail)
}

fn criterion_6() -> Outcome {
    let mut rng = SimRng::new(6);
    let mut worst: f64 = 0.0;
    for k in 0..50u64 {
        let d = 2 + (rng.uniform() * 4.0) as usize;
        let (data, _) = generate(&ModelSpec::new(Design::QuadD { dim: d }, 60, 800 + k)).unwrap();
        let theta = normalize_theta(&(0..d).map(|_| rng.standard_normal()).collect::<Vec<_>>()).unwrap();
        let proj = project_and_bin(&data, &theta, 1e-6).unwrap();
        let lambda = 10f64.powf(rng.uniform_in(-2.0, 0.0));
        let link = fit_penalized(&proj, lambda, &SplineOptions::default()).unwrap();
        let g = link_gradient(&data, &link, &theta);
        // Random unit direction in the tangent space at θ.
        let mut v: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        let vt: f64 = v.iter().zip(theta.as_slice()).map(|(a, b)| a * b).sum();
        v.iter_mut().zip(theta.as_slice()).for_each(|(a, b)| *a -= vt * b);
        let vn = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= vn);
        let step = 1e-6;
        let at = |s: f64| -> f64 {
            let p: Vec<f64> = theta.as_slice().iter().zip(&v).map(|(a, b)| a + s * b).collect();
            link_objective(&data, &link, &p)
        };
        let fd = (at(step) - at(-step)) / (2.0 * step);
        let analytic: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
        worst = worst.max((fd - analytic).abs() / (1.0 + analytic.abs()));
    }
    Outcome::new(worst <= 1e-4, format!("max relative gap {worst:.2e} over 50 instances"))
}

fn criterion_7() -> Outcome {
    let n = 500;
    let spec = ModelSpec::new(Design::Quad4Robust, n, 9090);
    let mut means = Vec::new();
    let mut failures = 0;
    for (t, lambda) in lambda_grid(n) {
        let cfg = EstimatorConfig::new(EstimatorKind::Plse { lambda: Some(lambda) });
        let s = theta_error_experiment(&spec, &cfg, 100, Some(lambda)).unwrap();
        failures += s.failures;
        means.push((t, s.mean_theta_error));
    }
    let lo = means.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
    let hi = means.iter().map(|m| m.1).fold(0.0, f64::max);
    let listing: Vec<String> = means.iter().map(|(t, e)| format!("T={t}: {e:.4}")).collect();
    Outcome::new(
        hi < 2.0 * lo && failures == 0,
        format!("ratio {:.2} ({}), failures {failures}", hi / lo, listing.join(", ")),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("coverage reproduction", criterion_1),
        ("asymptotic variance", criterion_2),
        ("solver oracle equivalence", criterion_3),
        ("spline fixed point", criterion_4),
        ("invariant suite", criterion_5),
        ("gradient check", criterion_6),
        ("robustness across lambda", criterion_7),
    ];
    let mut failed = Vec::new();
    for (k, (name, run)) in criteria.iter().enumerate() {
        let out = run();
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        println!("criterion {} ({name}): {verdict}: {}", k + 1, out.detail);
        if !out.pass {
            failed.push(k + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
