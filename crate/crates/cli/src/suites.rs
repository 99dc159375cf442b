//! The verification suites. Each returns its checks, tables and summary data.

use std::sync::Arc;

use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use thinobs::closed_forms::{w1s, w1s_jet};
use thinobs::frontier::{
    build_barrier, extract_free_boundary, fit_expansion, subsolution_check, BarrierSign, FitOptions, ThinGraph,
};
use thinobs::grushin::{
    dilation, open_domain_check, quasi_metric, quasi_triangle_constant, DerivativeMode, GrushinExpr, QuarterPoint,
    SExponent,
};
use thinobs::hodograph::{
    calibrate_model_scaling, diffeo_constant, eval_f, jacobian_diag, legendre_function, linearization_check,
    scaled_model_jet,
};
use thinobs::jet::Jet;
use thinobs::poly::Polynomial;
use thinobs::solver::{solve_vi_with, DiscreteSolution, ProblemSpec, SolveOptions, WeightedGrid};
use thinobs::spectral::{hypergeom_coeffs_exact, sl_eigen_oracle};
use thinobs::FracOrder;

use crate::config::ExperimentConfig;
use crate::error::{Result, SuiteContext};
use crate::report::{Check, SuiteReport, Table};

/// Runtime options that do not change any result.
#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub threads: usize,
}

fn order(v: f64) -> thinobs::Result<FracOrder> {
    FracOrder::new(v)
}

/// Short tag for file names, e.g. `s0.3`.
fn s_tag(v: f64) -> String {
    format!("s{v}")
}

fn solve_model(cfg: &ExperimentConfig, v: f64, h: f64, run: RunOptions) -> thinobs::Result<DiscreteSolution> {
    let sv = order(v)?;
    let n = cfg.n;
    let g = WeightedGrid::new(n, 1.0, 1.0, h, sv)?;
    let spec = ProblemSpec::new(g.clone(), Arc::new(move |p: &[f64]| w1s(sv, p[n - 1], p[n])));
    let opts = SolveOptions {
        tol: cfg.tol,
        omega: SolveOptions::near_optimal_omega(&g),
        threads: run.threads,
        ..SolveOptions::default()
    };
    Ok(solve_vi_with(&spec, &opts)?.solution)
}

/// Convergence study against the model solution, free-boundary location,
/// complementarity and the asymptotic fit on the finest grid.
pub fn solve(cfg: &ExperimentConfig, run: RunOptions) -> Result<SuiteReport> {
    let mut rep = SuiteReport::default();
    for &v in &cfg.s {
        let sv = order(v).suite("solve")?;
        let tag = s_tag(v);
        let mut table = Table::new(format!("convergence_{tag}"), vec!["h", "sup_error", "order_estimate"]);
        let mut errs: Vec<f64> = Vec::new();
        let mut fb_ratio: f64 = 0.0;
        let mut comp: f64 = 0.0;
        let mut finest = None;
        for &h in &cfg.h {
            let sol = solve_model(cfg, v, h, run).suite("solve")?;
            let n = sol.grid.n;
            let err = (0..sol.grid.len())
                .map(|i| {
                    let p = sol.grid.point(i);
                    (sol.values[i] - w1s(sv, p[n - 1], p[n])).abs()
                })
                .fold(0.0, f64::max);
            let est = errs.last().map_or(f64::NAN, |prev| (prev / err).ln() / (h_prev(cfg, h) / h).ln());
            table.push(vec![h, err, est]);
            errs.push(err);
            let fb = extract_free_boundary(&sol).suite("solve")?;
            fb_ratio = fb.iter().fold(fb_ratio, |a, p| a.max(p[n - 1].abs() / h));
            let c = sol.complementarity_report();
            comp = comp.max(c.obstacle_violation).max(c.positive_flux).max(c.product);
            finest = Some((sol, fb));
        }
        let orders: Vec<f64> = table.rows.iter().skip(1).map(|r| r[2]).collect();
        let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
        let monotone = errs.windows(2).all(|w| w[1] < w[0]);
        rep.checks.push(Check::holds(format!("{tag}.error_decreases"), monotone));
        rep.checks.push(Check::at_least(format!("{tag}.min_order"), min_order, 0.8));
        rep.checks.push(Check::at_most(format!("{tag}.free_boundary_offset_over_h"), fb_ratio, 2.0));
        rep.checks.push(Check::at_most(format!("{tag}.complementarity"), comp, 1e-8));
        let (sol, fb) = finest.expect("at least two spacings");
        let n = sol.grid.n;
        let x0 = vec![0.0; n];
        let fit = fit_expansion(&sol, &x0, &FitOptions::default()).suite("solve")?;
        rep.checks.push(Check::at_least(format!("{tag}.fit_c_min"), fit.c, 0.95));
        rep.checks.push(Check::at_most(format!("{tag}.fit_c_max"), fit.c, 1.05));
        let mut e_n = vec![0.0; n];
        e_n[n - 1] = 1.0;
        let nu_err = fit.nu.iter().zip(&e_n).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        rep.checks.push(Check::at_most(format!("{tag}.fit_normal_error"), nu_err, 1e-2));
        let mut poly = if n == 1 {
            Table::new(format!("free_boundary_{tag}"), vec!["x_n"])
        } else {
            Table::new(format!("free_boundary_{tag}"), vec!["x1", "g"])
        };
        for p in &fb {
            poly.push(p[..n].to_vec());
        }
        rep.tables.push(table);
        rep.tables.push(poly);
        rep.data.insert(
            tag,
            json!({ "sup_errors": errs, "orders": orders, "fit_c": fit.c, "fit_nu": fit.nu }),
        );
    }
    Ok(rep)
}

fn h_prev(cfg: &ExperimentConfig, h: f64) -> f64 {
    let k = cfg.h.iter().position(|x| *x == h).expect("spacing from the list");
    cfg.h[k - 1]
}

/// Angular eigenvalues against the closed form and exact termination of the
/// mode recurrence.
pub fn spectrum(cfg: &ExperimentConfig) -> Result<SuiteReport> {
    let mut rep = SuiteReport::default();
    let mut all = serde_json::Map::new();
    for &v in &cfg.s {
        let tag = s_tag(v);
        let ev = sl_eigen_oracle(order(v).suite("spectrum")?, cfg.grid, cfg.modes).suite("spectrum")?;
        let mut table = Table::new(format!("eigenvalues_{tag}"), vec!["k", "oracle", "exact", "rel_error"]);
        let mut worst: f64 = 0.0;
        let mut rows = Vec::new();
        for (k, lam) in ev.iter().enumerate() {
            let exact = (k * (k + 1)) as f64 - v * (v - 1.0);
            let rel = (lam - exact).abs() / exact;
            worst = worst.max(rel);
            table.push(vec![k as f64, *lam, exact, rel]);
            rows.push(json!({ "k": k, "oracle": lam, "exact": exact, "rel_error": rel }));
        }
        rep.checks.push(Check::at_most(format!("{tag}.eigenvalue_rel_error"), worst, 1e-3));
        let sr = BigRational::from_float(v).expect("finite order");
        let terminates = (0..=12).all(|k| {
            let (a, tail) = hypergeom_coeffs_exact(k, &sr);
            tail.is_zero() && a.len() == k + 1
        });
        rep.checks.push(Check::holds(format!("{tag}.recurrence_terminates"), terminates));
        rep.tables.push(table);
        all.insert(tag, Value::Array(rows));
    }
    rep.data.insert("eigenvalues".into(), Value::Object(all));
    Ok(rep)
}

fn bump(center: [f64; 2], radius: f64) -> impl Fn([f64; 2]) -> Jet<2> {
    move |y| {
        let v = Jet::<2>::vars(y);
        let d = (v[0] - center[0]) * (v[0] - center[0]) + (v[1] - center[1]) * (v[1] - center[1]);
        let t = d * (1.0 / (radius * radius));
        if t.v >= 1.0 {
            Jet::constant(0.0)
        } else {
            (1.0 - t).powi(4)
        }
    }
}

/// Scaling calibration, zero of the nonlinear functional, its linearization,
/// the transform of the solver output and the tangential diffeomorphism.
pub fn hodograph(cfg: &ExperimentConfig, run: RunOptions) -> Result<SuiteReport> {
    let mut rep = SuiteReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let finest_h = *cfg.h.last().expect("validated");
    for &v in &cfg.s {
        let sv = order(v).suite("hodograph")?;
        let tag = s_tag(v);
        let (mu, _) = calibrate_model_scaling(sv).suite("hodograph")?;
        let pts: Vec<[f64; 2]> = (0..cfg.samples)
            .map(|_| [rng.gen_range(0.1..=1.0), rng.gen_range(0.1..=1.0)])
            .collect();
        let res = eval_f(sv, |y| scaled_model_jet(sv, mu, y), None, DerivativeMode::Analytic, &pts)
            .suite("hodograph")?;
        let worst = res.iter().fold(0.0_f64, |a, r| a.max(r.abs()));
        rep.checks.push(Check::at_most(format!("{tag}.functional_zero"), worst, 1e-12));

        let t_list = [2e-2, 1e-2, 5e-3, 2e-3, 1e-3];
        let mut consts = Vec::new();
        let mut lin = Table::new(format!("linearization_{tag}"), vec!["t", "defect_bump1", "defect_bump2"]);
        let mut defects = Vec::new();
        for (c, r) in [([0.5, 0.5], 0.3), ([0.7, 0.35], 0.2)] {
            let samples: Vec<[f64; 2]> = (0..400)
                .map(|i| [c[0] - r + 2.0 * r * (i % 20) as f64 / 19.0, c[1] - r + 2.0 * r * (i / 20) as f64 / 19.0])
                .filter(|p| p[0] > 0.1 && p[1] > 0.1)
                .collect();
            let lr = linearization_check(sv, |y| scaled_model_jet(sv, mu, y), bump(c, r), &t_list, &samples)
                .suite("hodograph")?;
            // no slope means the defect is pure round-off
            let slope_err = lr.slope.map_or(0.0, |k| (k - 1.0).abs());
            rep.checks.push(Check::at_most(format!("{tag}.linearization_slope_error"), slope_err, 0.1));
            consts.push(lr.constant());
            defects.push(lr.defect);
        }
        for (k, t) in t_list.iter().enumerate() {
            lin.push(vec![*t, defects[0][k], defects[1][k]]);
        }
        rep.tables.push(lin);
        rep.checks.push(Check::at_most(
            format!("{tag}.linearization_constant_agreement"),
            (consts[0] / consts[1] - 1.0).abs(),
            0.01,
        ));

        let mut sub = cfg.clone();
        sub.n = 1;
        let sol = solve_model(&sub, v, finest_h, run).suite("hodograph")?;
        let field = legendre_function(&sol, 0.5, 21).suite("hodograph")?;
        let fb = field.free_boundary()[0];
        rep.checks.push(Check::at_most(format!("{tag}.legendre_free_boundary_over_h"), fb.abs() / finest_h, 2.0));
        let mut map = Table::new(format!("residual_{tag}"), vec!["y_n", "y_np1", "abs_F"]);
        for (p, r) in field.residual_map(None).suite("hodograph")? {
            map.push(vec![p.y_n, p.y_np1, r.abs()]);
        }
        rep.tables.push(map);
        let diag = jacobian_diag(&sol, &[0.0], &[0.8, 0.4, 0.2]).suite("hodograph")?;
        rep.checks.push(Check::above(format!("{tag}.jacobian_min"), diag.jac_min, 0.0));
        rep.checks.push(Check::holds(format!("{tag}.injective"), diag.injectivity_flag));
        rep.data.insert(
            tag,
            json!({
                "scaling": mu,
                "linearization_constants": consts,
                "dirichlet_defect": field.dirichlet_defect(),
                "jacobian": [diag.jac_min, diag.jac_max],
            }),
        );
    }
    let samples: Vec<QuarterPoint> = (0..cfg.samples)
        .map(|_| {
            QuarterPoint {
                y_tan: vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                y_n: rng.gen_range(0.0..0.8),
                y_np1: rng.gen_range(0.0..0.8),
            }
        })
        .collect();
    let mut table = Table::new("diffeo", vec!["a_norm", "c"]);
    let mut cs = Vec::new();
    for m in [1e-3, 1e-2, 1e-1] {
        let c = diffeo_constant(&[0.6 * m, 0.8 * m], &samples, 40);
        table.push(vec![m, c]);
        cs.push(c);
    }
    let spread = cs.iter().map(|c| (c / cs[0] - 1.0).abs()).fold(0.0, f64::max);
    rep.checks.push(Check::at_most("diffeo.constant_spread", spread, 0.05));
    rep.tables.push(table);
    rep.data.insert("diffeo_constants".into(), json!(cs));
    Ok(rep)
}

/// Symbolic operator identities, domain opening and the quasi-metric.
pub fn grushin(cfg: &ExperimentConfig) -> Result<SuiteReport> {
    let mut rep = SuiteReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let two_s = SExponent::new(0, 2);
    for &v in &cfg.s {
        let sv = order(v).suite("grushin")?;
        let tag = s_tag(v);
        let pn = GrushinExpr::weighted_polynomial(sv, two_s, &Polynomial::constant(3, 1.0));
        let p1 = GrushinExpr::weighted_polynomial(sv, two_s, &Polynomial::monomial(vec![1, 0, 0], 1.0));
        rep.checks.push(Check::holds(
            format!("{tag}.harmonic_thin_powers"),
            pn.delta_gs().is_zero() && p1.delta_gs().is_zero(),
        ));
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let (an, am): (f64, f64) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let mut quad = Polynomial::monomial(vec![0, 2, 0], an);
            quad.add_term(vec![0, 0, 2], am);
            let lq = GrushinExpr::weighted_polynomial(sv, two_s, &quad).delta_gs();
            for _ in 0..10 {
                let y = QuarterPoint {
                    y_tan: vec![rng.gen_range(-1.0..1.0)],
                    y_n: rng.gen_range(0.0..1.0),
                    y_np1: rng.gen_range(0.01..1.0),
                };
                let expect = 4.0 * ((1.0 + v) * an + (1.0 - v) * am) * y.y_n * y.y_np1.powf(1.0 - 2.0 * v);
                worst = worst.max((lq.eval(&y) - expect).abs());
            }
        }
        rep.checks.push(Check::at_most(format!("{tag}.mixed_quadratic"), worst, 1e-10));
        let samples: Vec<[f64; 3]> = (0..cfg.samples)
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(0.05..1.0), rng.gen_range(0.05..1.0)])
            .collect();
        let mut defect: f64 = 0.0;
        for d in [
            open_domain_check(sv, |x| x[1], &samples),
            open_domain_check(sv, |x| x[2] * x[2], &samples),
            open_domain_check(sv, |x| w1s_jet(sv, x[1], x[2]), &samples),
        ] {
            defect = defect.max(d.suite("grushin")?);
        }
        rep.checks.push(Check::at_most(format!("{tag}.domain_opening"), defect, 1e-10));
    }
    let mut homogeneous = true;
    for _ in 0..cfg.samples {
        let p = QuarterPoint {
            y_tan: vec![rng.gen_range(-1.0..1.0)],
            y_n: rng.gen(),
            y_np1: rng.gen(),
        };
        let q = QuarterPoint {
            y_tan: vec![rng.gen_range(-1.0..1.0)],
            y_n: rng.gen(),
            y_np1: rng.gen(),
        };
        let lambda = 4f64.powi(rng.gen_range(-3..=3));
        homogeneous &= quasi_metric(&dilation(lambda, &p), &dilation(lambda, &q)) == lambda * quasi_metric(&p, &q);
    }
    rep.checks.push(Check::holds("quasi_metric.dilation_homogeneity", homogeneous));
    let k = quasi_triangle_constant(2, cfg.triples, cfg.seed);
    rep.checks.push(Check::at_most("quasi_metric.triangle_constant", k, 4.0));
    rep.data.insert("quasi_triangle_constant".into(), json!(k));
    Ok(rep)
}

/// Sample points of `B_{1/4}` at distance at least 0.03 from the curved graph.
fn curved_samples(graph: &ThinGraph) -> Vec<Vec<f64>> {
    let mut pts = Vec::new();
    for i in 0..25 {
        for j in 0..25 {
            for k in 0..13 {
                let x = vec![-0.25 + i as f64 / 48.0, -0.25 + j as f64 / 48.0, 0.005 + k as f64 / 48.0];
                if x.iter().map(|v| v * v).sum::<f64>() <= 0.0625 && graph.dist_gamma(&x) >= 0.03 {
                    pts.push(x);
                }
            }
        }
    }
    pts
}

/// Flat and curved barriers over the configured orders and exponents.
pub fn barrier(cfg: &ExperimentConfig) -> Result<SuiteReport> {
    let mut rep = SuiteReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let flat_pts: Vec<Vec<f64>> = (0..cfg.samples)
        .map(|_| {
            let r: f64 = rng.gen_range(0.05..1.0);
            let a: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            vec![r * a.cos(), r * a.sin()]
        })
        .collect();
    let flat = ThinGraph::Flat { level: 0.0 };
    let curved = ThinGraph::Sine {
        amplitude: 0.05,
        frequency: 1.0,
    };
    let curved_pts = curved_samples(&curved);
    let mut table = Table::new("constants", vec!["s", "tau", "flat_lower", "flat_upper", "curved_lower"]);
    for &v in &cfg.s {
        let sv = order(v).suite("barrier")?;
        for &tau in &cfg.tau {
            let tag = format!("{}.tau{tau}", s_tag(v));
            let build = |g, n, sign| build_barrier(g, n, sv, tau, sign, &Default::default()).suite("barrier");
            let lower = subsolution_check(&build(flat, 1, BarrierSign::Lower)?, &flat_pts);
            let upper = subsolution_check(&build(flat, 1, BarrierSign::Upper)?, &flat_pts);
            let b = build(curved, 2, BarrierSign::Lower)?;
            let c = subsolution_check(&b, &curved_pts);
            let mut pou: f64 = 0.0;
            if let Some(cover) = &b.cover {
                for x in &curved_pts {
                    let sum: f64 = cover.partition([x[0], x[1], x[2]]).iter().map(|(_, e)| e.v).sum();
                    pou = pou.max((sum - 1.0).abs());
                }
            }
            rep.checks.push(Check::above(format!("{tag}.flat_lower"), lower, 0.0));
            rep.checks.push(Check::below(format!("{tag}.flat_upper"), upper, 0.0));
            rep.checks.push(Check::above(format!("{tag}.curved_lower"), c, 0.0));
            rep.checks.push(Check::at_most(format!("{tag}.partition_of_unity"), pou, 1e-12));
            table.push(vec![v, tau, lower, upper, c]);
        }
    }
    rep.tables.push(table);
    rep.data.insert("curved_samples".into(), json!(curved_pts.len()));
    Ok(rep)
}
