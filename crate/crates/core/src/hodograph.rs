//! Partial hodograph transform and Legendre function of a thin-obstacle solution,
//! the fully nonlinear functional satisfied by the Legendre function, its
//! linearization, and the tangential diffeomorphism flow.
//!
//! The transform sends `x` to `y` with `y'' = x''`,
//! `y_n^{2s} = d_n w` and `y_{n+1}^{2(1-s)} = -((1-s)/s) x_{n+1}^{1-2s} d_{n+1} w`.

use serde::Serialize;

use crate::closed_forms::{FracOrder, C_STAR};
use crate::error::{Error, Result};
use crate::grushin::{delta_gs_jet, DerivativeMode, QuarterGrid, QuarterPoint};
use crate::jet::{fd_jet, stencil_jet, Jet};
use crate::lsq::{log_log_slope, weighted_lsq};
use crate::solver::DiscreteSolution;

/// Tolerance below zero tolerated before a fractional root.
const CLAMP: f64 = 1e-12;

fn clamped_root(v: f64, p: f64) -> Option<f64> {
    if v >= 0.0 {
        Some(v.powf(p))
    } else if v >= -CLAMP {
        Some(0.0)
    } else {
        None
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TransformedNode {
    /// Linear grid index of the source node.
    pub index: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub w: f64,
}

/// `d_n w` and `x_{n+1}^{1-2s} d_{n+1} w` at an interior node by centred
/// differences. On the thin plane the weighted normal derivative is the
/// finite-volume balance of the half cell above the node, the same flux the
/// solver constrains. The third value is the tolerance for a flux of the wrong
/// sign: the size of the half-cell correction on the thin plane, else 0.
fn weighted_gradient(sol: &DiscreteSolution, ijk: &[usize]) -> (f64, f64, f64) {
    let g = &sol.grid;
    let n = g.n;
    let sv = g.s.get();
    let h = g.h;
    let at = |axis: usize, d: isize| {
        let mut m = ijk.to_vec();
        m[axis] = (m[axis] as isize + d) as usize;
        sol.values[g.index(&m)]
    };
    let w0 = sol.values[g.index(ijk)];
    let dn = (at(n - 1, 1) - at(n - 1, -1)) / (2.0 * h);
    if ijk[n] == 0 {
        let lap: f64 = (0..n).map(|k| (at(k, 1) - 2.0 * w0 + at(k, -1)) / (h * h)).sum();
        let corr = (0.5 * h).powf(2.0 - 2.0 * sv) / (2.0 - 2.0 * sv) * lap;
        (dn, 2.0 * sv * (at(n, 1) - w0) / h.powf(2.0 * sv) + corr, corr.abs())
    } else {
        let y = g.coord(n, ijk[n]);
        (dn, y.powf(1.0 - 2.0 * sv) * (at(n, 1) - at(n, -1)) / (2.0 * h), 0.0)
    }
}

/// Applies the transform at every node where centred differences exist
/// (the grid boundary is skipped).
pub fn forward_transform(sol: &DiscreteSolution) -> Result<Vec<TransformedNode>> {
    let g = &sol.grid;
    let n = g.n;
    let sv = g.s.get();
    let mut out = Vec::new();
    let mut bad = Vec::new();
    for idx in 0..g.len() {
        let ijk = g.multi_index(idx);
        if g.is_boundary(&ijk) {
            continue;
        }
        let (dn, q, qtol) = weighted_gradient(sol, &ijk);
        let q = if q > 0.0 && q <= qtol { 0.0 } else { q };
        let yn = clamped_root(dn, 1.0 / (2.0 * sv));
        let ym = clamped_root(-((1.0 - sv) / sv) * q, 1.0 / (2.0 * (1.0 - sv)));
        match (yn, ym) {
            (Some(a), Some(b)) => {
                let x = g.point(idx);
                let mut y = x[..n - 1].to_vec();
                y.push(a);
                y.push(b);
                out.push(TransformedNode {
                    index: idx,
                    x,
                    y,
                    w: sol.values[idx],
                });
            }
            _ => bad.push(idx),
        }
    }
    if !bad.is_empty() {
        return Err(Error::MonotonicityViolated(bad));
    }
    Ok(out)
}

/// Legendre function sampled on a quarter grid, with the inverse map
/// `y -> (x_n(y), x_{n+1}(y))`.
#[derive(Clone, Debug, Serialize)]
pub struct LegendreField {
    pub s: FracOrder,
    pub grid: QuarterGrid,
    pub v: Vec<f64>,
    pub xmap: Vec<[f64; 2]>,
}

/// `v(y) = w(x) - x_n y_n^{2s} + x_{n+1}^{2s} y_{n+1}^{2(1-s)} / (2(1-s))`.
pub fn legendre_value(s: FracOrder, w: f64, x_n: f64, x_np1: f64, y_n: f64, y_np1: f64) -> f64 {
    let sv = s.get();
    w - x_n * y_n.powf(2.0 * sv)
        + x_np1.powf(2.0 * sv) * y_np1.powf(2.0 * (1.0 - sv)) / (2.0 * (1.0 - sv))
}

/// Inverse of the bilinear map of a quad with corners `c00, c10, c01, c11` by
/// Newton iteration. The parameters are not restricted to the unit square.
fn invert_bilinear(c: &[[f64; 2]; 4], p: [f64; 2]) -> Option<(f64, f64)> {
    let (mut u, mut v) = (0.5, 0.5);
    for _ in 0..30 {
        let m = |k: usize| {
            (1.0 - u) * (1.0 - v) * c[0][k] + u * (1.0 - v) * c[1][k] + (1.0 - u) * v * c[2][k] + u * v * c[3][k]
        };
        let r = [m(0) - p[0], m(1) - p[1]];
        let du = |k: usize| (1.0 - v) * (c[1][k] - c[0][k]) + v * (c[3][k] - c[2][k]);
        let dv = |k: usize| (1.0 - u) * (c[2][k] - c[0][k]) + u * (c[3][k] - c[1][k]);
        let (a, b, cc, d) = (du(0), dv(0), du(1), dv(1));
        let det = a * d - b * cc;
        if det.abs() < 1e-300 {
            return None;
        }
        let su = (d * r[0] - b * r[1]) / det;
        let sv = (-cc * r[0] + a * r[1]) / det;
        u -= su;
        v -= sv;
        if su.abs() + sv.abs() < 1e-14 {
            return Some((u, v));
        }
    }
    (u.is_finite() && v.is_finite()).then_some((u, v))
}

/// Distance of bilinear parameters from the unit square (sup norm).
fn excess((u, v): (f64, f64)) -> f64 {
    [-u, u - 1.0, -v, v - 1.0].into_iter().fold(0.0, f64::max)
}

/// Parametric distance up to which a quarter node outside every image cell
/// is extrapolated from the nearest one. The discrete image of the thin
/// plane misses the axes by `O(h)`.
const MAX_EXTRAPOLATION: f64 = 1.0;

struct ImageQuad<'a> {
    quad: [[f64; 2]; 4],
    corners: [&'a TransformedNode; 4],
    lo: [f64; 2],
    hi: [f64; 2],
}

impl ImageQuad<'_> {
    fn interpolate(&self, s: FracOrder, n: usize, (u, t): (f64, f64)) -> (f64, [f64; 2]) {
        let wts = [(1.0 - u) * (1.0 - t), u * (1.0 - t), (1.0 - u) * t, u * t];
        let mut acc = [0.0; 3];
        for (c, wt) in self.corners.iter().zip(wts) {
            acc[0] += wt * legendre_value(s, c.w, c.x[n - 1], c.x[n], c.y[n - 1], c.y[n]);
            acc[1] += wt * c.x[n - 1];
            acc[2] += wt * c.x[n];
        }
        (acc[0], [acc[1], acc[2]])
    }
}

/// Transforms the solution and resamples `v` and the inverse map onto
/// `[0, extent]^2` (one column per interior tangential grid node for `n = 2`).
///
/// Each quarter node is located inside the image of a grid cell and
/// interpolated with that cell's bilinear coordinates. Nodes on the axes that
/// no image cell contains are extrapolated from the nearest cell, up to one
/// cell in parameter space.
pub fn legendre_function(sol: &DiscreteSolution, extent: f64, count: usize) -> Result<LegendreField> {
    let g = &sol.grid;
    let n = g.n;
    let s = g.s;
    let nodes = forward_transform(sol)?;
    let mut by_index = vec![usize::MAX; g.len()];
    for (k, t) in nodes.iter().enumerate() {
        by_index[t.index] = k;
    }
    let tan: Vec<f64> = if n == 2 {
        (1..g.dims[0] - 1).map(|i| g.coord(0, i)).collect()
    } else {
        Vec::new()
    };
    let normal: Vec<f64> = (0..count).map(|i| extent * i as f64 / (count - 1) as f64).collect();
    let grid = QuarterGrid::new(tan, normal)?;
    let m = grid.normal.len();
    let mut v = vec![f64::NAN; grid.len()];
    let mut xmap = vec![[f64::NAN; 2]; grid.len()];
    let (dn, dm) = (g.dims[n - 1], g.dims[n]);
    for col in 0..grid.columns() {
        let node = |i: usize, j: usize| -> Option<&TransformedNode> {
            let mut ijk = vec![i, j];
            if n == 2 {
                ijk.insert(0, col + 1);
            }
            let k = by_index[g.index(&ijk)];
            (k != usize::MAX).then(|| &nodes[k])
        };
        let mut quads = Vec::new();
        for i in 0..dn - 1 {
            for j in 0..dm - 1 {
                let (Some(c0), Some(c1), Some(c2), Some(c3)) =
                    (node(i, j), node(i + 1, j), node(i, j + 1), node(i + 1, j + 1))
                else {
                    continue;
                };
                let corners = [c0, c1, c2, c3];
                let quad = corners.map(|c| [c.y[n - 1], c.y[n]]);
                let lo = [0, 1].map(|k| quad.iter().map(|q| q[k]).fold(f64::INFINITY, f64::min));
                let hi = [0, 1].map(|k| quad.iter().map(|q| q[k]).fold(f64::NEG_INFINITY, f64::max));
                quads.push(ImageQuad { quad, corners, lo, hi });
            }
        }
        for qi in 0..m {
            for qj in 0..m {
                let p = [grid.normal[qi], grid.normal[qj]];
                let inside = |q: &ImageQuad| {
                    let tol = 1e-12;
                    p[0] >= q.lo[0] - tol && p[0] <= q.hi[0] + tol && p[1] >= q.lo[1] - tol && p[1] <= q.hi[1] + tol
                };
                let mut best: Option<(f64, usize, (f64, f64))> = None;
                for (k, q) in quads.iter().enumerate() {
                    if !inside(q) {
                        continue;
                    }
                    if let Some(uv) = invert_bilinear(&q.quad, p) {
                        if excess(uv) <= 1e-9 {
                            best = Some((0.0, k, uv));
                            break;
                        }
                    }
                }
                if best.is_none() {
                    for (k, q) in quads.iter().enumerate() {
                        let span = (q.hi[0] - q.lo[0]).max(q.hi[1] - q.lo[1]);
                        let near = p[0] >= q.lo[0] - span
                            && p[0] <= q.hi[0] + span
                            && p[1] >= q.lo[1] - span
                            && p[1] <= q.hi[1] + span;
                        if !near {
                            continue;
                        }
                        if let Some(uv) = invert_bilinear(&q.quad, p) {
                            let e = excess(uv);
                            if e <= MAX_EXTRAPOLATION && best.is_none_or(|b| e < b.0) {
                                best = Some((e, k, uv));
                            }
                        }
                    }
                }
                if let Some((_, k, uv)) = best {
                    let qidx = grid.index(col, qi, qj);
                    let (val, x) = quads[k].interpolate(s, n, uv);
                    v[qidx] = val;
                    xmap[qidx] = x;
                }
            }
        }
    }
    let gaps = v.iter().filter(|x| x.is_nan()).count();
    if gaps > 0 {
        return Err(Error::ResampleGap(gaps));
    }
    Ok(LegendreField { s, grid, v, xmap })
}

impl LegendreField {
    /// Field built from closed forms `y -> (v, x_n, x_{n+1})`.
    pub fn from_fn(s: FracOrder, grid: QuarterGrid, f: impl Fn(&QuarterPoint) -> (f64, f64, f64)) -> Self {
        let vals = grid.sample(|p| f(p).0);
        let xn = grid.sample(|p| f(p).1);
        let xm = grid.sample(|p| f(p).2);
        LegendreField {
            s,
            grid,
            v: vals,
            xmap: xn.into_iter().zip(xm).map(|(a, b)| [a, b]).collect(),
        }
    }

    /// Free-boundary parametrization `x_n` at the `P`-node of each column.
    pub fn free_boundary(&self) -> Vec<f64> {
        (0..self.grid.columns())
            .map(|c| self.xmap[self.grid.index(c, 0, 0)][0])
            .collect()
    }

    /// Largest `|v|` on `{y_n = 0}`.
    pub fn dirichlet_defect(&self) -> f64 {
        let m = self.grid.normal.len();
        let mut worst: f64 = 0.0;
        for c in 0..self.grid.columns() {
            for j in 0..m {
                worst = worst.max(self.v[self.grid.index(c, 0, j)].abs());
            }
        }
        worst
    }

    /// Residual of the nonlinear functional at every node at least two cells
    /// from the axes and the grid ends, by fourth-order grid differences.
    pub fn residual_map(&self, f: Option<&dyn Fn(&[f64]) -> f64>) -> Result<Vec<(QuarterPoint, f64)>> {
        let g = &self.grid;
        let m = g.normal.len();
        let hy = g.normal[1] - g.normal[0];
        let mut out = Vec::new();
        if g.tan.is_empty() {
            for i in 2..m - 2 {
                for j in 2..m - 2 {
                    let jet = stencil_jet(
                        |o: [i32; 2]| self.v[g.index(0, (i as i32 + o[0]) as usize, (j as i32 + o[1]) as usize)],
                        [hy, hy],
                    );
                    let y = [g.normal[i], g.normal[j]];
                    out.push((g.point(0, i, j), f_terms(self.s, &jet, y, f)?.residual));
                }
            }
        } else {
            let ht = g.tan[1] - g.tan[0];
            for c in 2..g.tan.len() - 2 {
                for i in 2..m - 2 {
                    for j in 2..m - 2 {
                        let jet = stencil_jet(
                            |o: [i32; 3]| {
                                self.v[g.index(
                                    (c as i32 + o[0]) as usize,
                                    (i as i32 + o[1]) as usize,
                                    (j as i32 + o[2]) as usize,
                                )]
                            },
                            [ht, hy, hy],
                        );
                        let y = [g.tan[c], g.normal[i], g.normal[j]];
                        out.push((g.point(c, i, j), f_terms(self.s, &jet, y, f)?.residual));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Terms of the nonlinear functional at one point.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FTerms {
    pub residual: f64,
    /// Determinant `J(v)` of the normal block.
    pub jacobian: f64,
    pub x_n: f64,
    pub x_np1: f64,
}

/// Evaluates the nonlinear functional `F(D^2 v, Dv, y)` from a jet of `v` in
/// `(y'', y_n, y_{n+1})`. `f` is evaluated at `(y'', x_n(y), x_{n+1}(y))`.
pub fn f_terms<const D: usize>(
    s: FracOrder,
    v: &Jet<D>,
    y: [f64; D],
    f: Option<&dyn Fn(&[f64]) -> f64>,
) -> Result<FTerms> {
    let sv = s.get();
    let e = s.weight_exp();
    let (na, nb) = (D - 2, D - 1);
    let (a, b) = (y[na], y[nb]);
    let ae = a.powf(e);
    let be = b.powf(-e);
    // A = y_n^{1-2s} d_n v, B = y_{n+1}^{2s-1} d_{n+1} v and their gradients
    let big_a = ae * v.g[na];
    let big_b = be * v.g[nb];
    let mut da = [0.0; D];
    let mut db = [0.0; D];
    for k in 0..D {
        da[k] = ae * v.h[k][na];
        db[k] = be * v.h[k][nb];
    }
    da[na] += e * a.powf(e - 1.0) * v.g[na];
    db[nb] += -e * b.powf(-e - 1.0) * v.g[nb];
    if big_b < -CLAMP {
        return Err(Error::NegativeRadicand(big_b));
    }
    let x = big_b.max(0.0).powf(1.0 / (2.0 * sv));
    let x_n = -big_a / (2.0 * sv);
    let k = 1.0 / (2.0 * sv);
    let xe = x.powf(e);
    let jac = (-k * da[na]) * (k * xe * db[nb]) - (-k * da[nb]) * (k * xe * db[na]);
    let x24 = x.powf(2.0 - 4.0 * sv);
    let mut tangential = 0.0;
    for i in 0..na {
        let m = [
            [v.h[i][i], v.h[i][na], v.h[i][nb]],
            [k * da[i], -k * da[na], -k * da[nb]],
            [-k * db[i], k * db[na], k * db[nb]],
        ];
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        tangential += x24 * det;
    }
    let div_n = b.powf(e) * da[na];
    let div_np1 = x24 * a.powf(-e) * db[nb];
    let source = match f {
        Some(f) => {
            let mut p = y[..na].to_vec();
            p.push(x_n);
            p.push(x);
            x.powf(3.0 - 2.0 * sv) * jac * f(&p)
        }
        None => 0.0,
    };
    Ok(FTerms {
        residual: tangential + div_n + div_np1 - source,
        jacobian: jac,
        x_n,
        x_np1: x,
    })
}

/// Residual of the nonlinear functional at each point, with analytic jets or
/// fourth-order differences of the values of `v`.
pub fn eval_f<const D: usize>(
    s: FracOrder,
    v: impl Fn([f64; D]) -> Jet<D>,
    f: Option<&dyn Fn(&[f64]) -> f64>,
    mode: DerivativeMode,
    points: &[[f64; D]],
) -> Result<Vec<f64>> {
    points
        .iter()
        .map(|&y| {
            let jet = match mode {
                DerivativeMode::Analytic => v(y),
                DerivativeMode::FiniteDifference { step } => {
                    if y[D - 2] < 2.0 * step || y[D - 1] < 2.0 * step {
                        return Err(Error::AxisSingularity(format!(
                            "point ({}, {}) inside the two-cell collar",
                            y[D - 2],
                            y[D - 1]
                        )));
                    }
                    fd_jet(|p| v(p).v, y, step)
                }
            };
            Ok(f_terms(s, &jet, y, f)?.residual)
        })
        .collect()
}

/// `mu (-(s/(s+1)) y_n^{2s+2} + y_n^{2s} y_{n+1}^2)` on jets.
pub fn scaled_model_jet<const D: usize>(s: FracOrder, mu: f64, y: [f64; D]) -> Jet<D> {
    let sv = s.get();
    let v = Jet::<D>::vars(y);
    let (a, b) = (v[D - 2], v[D - 1]);
    a.powf(2.0 * sv) * (a * a * (-(sv / (sv + 1.0))) + b * b) * mu
}

/// Candidate normalizations of the model Legendre function.
pub const MODEL_SCALINGS: [f64; 2] = [0.5, 1.0];

/// Runs every candidate scaling through the nonlinear functional on a fixed
/// sample and returns the one with the smallest residual, with that residual.
pub fn calibrate_model_scaling(s: FracOrder) -> Result<(f64, f64)> {
    let pts: Vec<[f64; 2]> = (0..25)
        .map(|i| [0.1 + 0.9 * (i % 5) as f64 / 4.0, 0.1 + 0.9 * (i / 5) as f64 / 4.0])
        .collect();
    let mut best = (f64::NAN, f64::INFINITY);
    for mu in MODEL_SCALINGS {
        let res = eval_f(s, |y| scaled_model_jet(s, mu, y), None, DerivativeMode::Analytic, &pts)?;
        let worst = res.iter().fold(0.0_f64, |a, r| a.max(r.abs()));
        if worst < best.1 {
            best = (mu, worst);
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, Serialize)]
pub struct LinearizationReport {
    pub t: Vec<f64>,
    /// Fitted constant per `t`; NaN when `Delta_{G,s} h` vanishes on the sample.
    pub c: Vec<f64>,
    /// `||D(t) - c(t) Delta_{G,s} h|| / ||Delta_{G,s} h||` (0 when `h = 0`).
    pub defect: Vec<f64>,
    /// Log-log slope of the defect against `t`; `None` when every defect is at
    /// round-off level (the functional is linear along the direction).
    pub slope: Option<f64>,
}

impl LinearizationReport {
    /// Constant fitted at the smallest `t`.
    pub fn constant(&self) -> f64 {
        let k = (0..self.t.len())
            .min_by(|&i, &j| self.t[i].partial_cmp(&self.t[j]).unwrap())
            .unwrap();
        self.c[k]
    }
}

/// Compares the difference quotient `(F(v0 + t h) - F(v0)) / t` with
/// `Delta_{G,s} h` (analytic jets, `f = 0`).
pub fn linearization_check<const D: usize>(
    s: FracOrder,
    v0: impl Fn([f64; D]) -> Jet<D>,
    h: impl Fn([f64; D]) -> Jet<D>,
    t_list: &[f64],
    samples: &[[f64; D]],
) -> Result<LinearizationReport> {
    let base: Vec<f64> = samples
        .iter()
        .map(|&y| Ok(f_terms(s, &v0(y), y, None)?.residual))
        .collect::<Result<_>>()?;
    let lap: Vec<f64> = samples.iter().map(|&y| delta_gs_jet(s, &h(y), y)).collect();
    let lap_norm = lap.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut c = Vec::new();
    let mut defect = Vec::new();
    for &t in t_list {
        let d: Vec<f64> = samples
            .iter()
            .zip(&base)
            .map(|(&y, f0)| {
                let jet = v0(y) + h(y) * t;
                Ok((f_terms(s, &jet, y, None)?.residual - f0) / t)
            })
            .collect::<Result<_>>()?;
        if lap_norm == 0.0 {
            let dn = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            c.push(f64::NAN);
            defect.push(dn);
            continue;
        }
        let ct = d.iter().zip(&lap).map(|(a, b)| a * b).sum::<f64>() / (lap_norm * lap_norm);
        let r = d
            .iter()
            .zip(&lap)
            .map(|(a, b)| (a - ct * b).powi(2))
            .sum::<f64>()
            .sqrt();
        c.push(ct);
        defect.push(r / lap_norm);
    }
    // an exactly linear functional leaves only round-off in the defect
    let slope = if defect.iter().all(|d| *d <= 1e-12) {
        None
    } else {
        log_log_slope(t_list, &defect)
    };
    Ok(LinearizationReport {
        t: t_list.to_vec(),
        c,
        defect,
        slope,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct InverseAsymptotics {
    pub y_tan: Vec<f64>,
    pub g: f64,
    pub a0: f64,
    pub a1: f64,
    /// `a_1` as fitted from `x_{n+1}^{2s} ~ 2 a_1 y_n^{2s} y_{n+1}^{2s}`.
    pub a1_height: f64,
    pub radii: Vec<f64>,
    /// RMS residual of the `x_n` fit per collar radius.
    pub residuals: Vec<f64>,
    /// Log-log slope of the residuals against the collar radius.
    pub residual_exponent: Option<f64>,
}

/// Fits the leading behaviour of the inverse map at each `P`-point over
/// collars `|(y_n, y_{n+1})| <= rho` for each `rho` in `radii` (descending).
pub fn inverse_asymptotics(field: &LegendreField, radii: &[f64]) -> Result<Vec<InverseAsymptotics>> {
    let g = &field.grid;
    let sv = field.s.get();
    let m = g.normal.len();
    let mut out = Vec::new();
    for c in 0..g.columns() {
        let collect = |rho: f64| {
            let mut pts = Vec::new();
            for i in 0..m {
                for j in 0..m {
                    let (a, b) = (g.normal[i], g.normal[j]);
                    if a.hypot(b) <= rho {
                        pts.push((a, b, field.xmap[g.index(c, i, j)]));
                    }
                }
            }
            pts
        };
        let mut residuals = Vec::new();
        let mut coeffs = Vec::new();
        for &rho in radii {
            let pts = collect(rho);
            let rows: Vec<Vec<f64>> = pts.iter().map(|(a, b, _)| vec![1.0, a * a, -b * b]).collect();
            let rhs: Vec<f64> = pts.iter().map(|p| p.2[0]).collect();
            let fit = weighted_lsq(&rows, &rhs, &vec![1.0; rows.len()])?;
            residuals.push(fit.residual / (rows.len() as f64).sqrt());
            coeffs = fit.coeffs;
        }
        let pts = collect(radii[radii.len() - 1]);
        let (mut num, mut den) = (0.0, 0.0);
        for (a, b, x) in &pts {
            let basis = 2.0 * (a * b).powf(2.0 * sv);
            num += basis * x[1].max(0.0).powf(2.0 * sv);
            den += basis * basis;
        }
        if den == 0.0 {
            return Err(Error::DegenerateFit("no off-axis points in the collar".into()));
        }
        let scale = pts.iter().fold(0.0_f64, |acc, p| acc.max(p.2[0].abs())).max(1e-300);
        let residual_exponent = if residuals.iter().all(|r| *r <= 1e-11 * scale) {
            None
        } else {
            log_log_slope(radii, &residuals)
        };
        out.push(InverseAsymptotics {
            y_tan: g.tan.get(c).map(|t| vec![*t]).unwrap_or_default(),
            g: coeffs[0],
            a0: coeffs[1],
            a1: coeffs[2],
            a1_height: num / den,
            radii: radii.to_vec(),
            residuals,
            residual_exponent,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct TransformDiag {
    pub jac_min: f64,
    pub jac_max: f64,
    pub injectivity_flag: bool,
    /// `(lambda, min |det|, max |det|)` per scale.
    pub per_scale: Vec<(f64, f64, f64)>,
}

/// Whether the images are pairwise separated: `|T x_i - T x_j| > tol |x_i - x_j|`.
pub fn injectivity_flag(xs: &[Vec<f64>], ys: &[Vec<f64>], tol: f64) -> bool {
    let d = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    for i in 0..xs.len() {
        for j in 0..i {
            let dx = d(&xs[i], &xs[j]);
            if dx > 0.0 && d(&ys[i], &ys[j]) <= tol * dx {
                return false;
            }
        }
    }
    true
}

/// Determinant of the transform of the rescalings `w(x0 + lambda x) / lambda^{1+s}`
/// on the unit half annulus `1/2 <= |x| <= 1`, for each `lambda`.
///
/// The rescaled transform is `lambda^{-1/2}` times the original in its last two
/// components, so its determinant at `x` is `lambda det DT(x0 + lambda x)`.
pub fn jacobian_diag(sol: &DiscreteSolution, x0: &[f64], lambdas: &[f64]) -> Result<TransformDiag> {
    let g = &sol.grid;
    let n = g.n;
    let nodes = forward_transform(sol)?;
    let mut map = vec![usize::MAX; g.len()];
    for (k, t) in nodes.iter().enumerate() {
        map[t.index] = k;
    }
    let mut per_scale = Vec::new();
    let mut all_inj = true;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for &lambda in lambdas {
        let (mut smin, mut smax) = (f64::INFINITY, 0.0_f64);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for t in &nodes {
            let ijk = g.multi_index(t.index);
            let r = t
                .x
                .iter()
                .zip(x0.iter().chain(std::iter::once(&0.0)))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            if r < 0.5 * lambda || r > lambda || ijk[n] == 0 {
                continue;
            }
            let nb = |axis: usize, d: isize| -> Option<&TransformedNode> {
                let mut m = ijk.clone();
                m[axis] = (m[axis] as isize + d) as usize;
                let k = map[g.index(&m)];
                (k != usize::MAX).then(|| &nodes[k])
            };
            let mut dt = [[0.0; 2]; 2];
            let mut ok = true;
            for (col, axis) in [n - 1, n].into_iter().enumerate() {
                match (nb(axis, 1), nb(axis, -1)) {
                    (Some(p), Some(q)) => {
                        for row in 0..2 {
                            dt[row][col] = (p.y[n - 1 + row] - q.y[n - 1 + row]) / (2.0 * g.h);
                        }
                    }
                    _ => ok = false,
                }
            }
            if !ok {
                continue;
            }
            let det = (lambda * (dt[0][0] * dt[1][1] - dt[0][1] * dt[1][0])).abs();
            smin = smin.min(det);
            smax = smax.max(det);
            xs.push(t.x.clone());
            ys.push(t.y.clone());
        }
        if xs.is_empty() {
            return Err(Error::InsufficientSamples(format!("no transform nodes at scale {lambda}")));
        }
        let stride = (xs.len() / 400).max(1);
        let xs: Vec<Vec<f64>> = xs.into_iter().step_by(stride).collect();
        let ys: Vec<Vec<f64>> = ys.into_iter().step_by(stride).collect();
        all_inj &= injectivity_flag(&xs, &ys, 1e-6);
        lo = lo.min(smin);
        hi = hi.max(smax);
        per_scale.push((lambda, smin, smax));
    }
    Ok(TransformDiag {
        jac_min: lo,
        jac_max: hi,
        injectivity_flag: all_inj,
        per_scale,
    })
}

/// Smooth radial cut-off: 1 for `rho <= 1/4`, 0 for `rho >= 1/2`, built from
/// `exp(-1/t)` so that it is C^infinity.
pub fn radial_cutoff(rho: f64) -> f64 {
    let bump = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let t = (rho - 0.25) / 0.25;
    if t <= 0.0 {
        return 1.0;
    }
    if t >= 1.0 {
        return 0.0;
    }
    let (p, q) = (bump(1.0 - t), bump(t));
    p / (p + q)
}

/// `Phi_a(y)`: RK4 integration over `[0, 1]` of
/// `phi' = a ((3/4)^2 - |phi|^2)_+^3 eta(y_n, y_{n+1})`, `phi(0) = y''`.
pub fn diffeo_flow(a: &[f64], y: &QuarterPoint, steps: usize) -> QuarterPoint {
    let eta = radial_cutoff(y.y_n.hypot(y.y_np1));
    let rhs = |phi: &[f64]| -> Vec<f64> {
        let r2: f64 = phi.iter().map(|v| v * v).sum();
        let f = (0.5625 - r2).max(0.0).powi(3) * eta;
        a.iter().map(|ai| ai * f).collect()
    };
    let dt = 1.0 / steps.max(1) as f64;
    let mut phi = y.y_tan.clone();
    let axpy = |x: &[f64], k: &[f64], c: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + c * b).collect() };
    for _ in 0..steps.max(1) {
        let k1 = rhs(&phi);
        let k2 = rhs(&axpy(&phi, &k1, 0.5 * dt));
        let k3 = rhs(&axpy(&phi, &k2, 0.5 * dt));
        let k4 = rhs(&axpy(&phi, &k3, dt));
        for i in 0..phi.len() {
            phi[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    QuarterPoint {
        y_tan: phi,
        y_n: y.y_n,
        y_np1: y.y_np1,
    }
}

/// `max |Phi_a(y) - y| / |a|` over the samples.
pub fn diffeo_constant(a: &[f64], samples: &[QuarterPoint], steps: usize) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    samples
        .iter()
        .map(|y| {
            let p = diffeo_flow(a, y, steps);
            p.y_tan
                .iter()
                .zip(&y.y_tan)
                .map(|(u, v)| (u - v).powi(2))
                .sum::<f64>()
                .sqrt()
                / na
        })
        .fold(0.0, f64::max)
}

/// The model Legendre function at the frozen normalization, as a jet.
pub fn model_jet<const D: usize>(s: FracOrder, y: [f64; D]) -> Jet<D> {
    scaled_model_jet(s, C_STAR, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_forms::{eval_v_model, w1s, w1s_jet};
    use crate::solver::WeightedGrid;

    fn s(v: f64) -> FracOrder {
        FracOrder::new(v).unwrap()
    }

    fn model_solution(sv: FracOrder, h: f64) -> DiscreteSolution {
        let g = WeightedGrid::new(1, 1.0, 1.0, h, sv).unwrap();
        DiscreteSolution::sample(g, |p| w1s(sv, p[0], p[1])).unwrap()
    }

    #[test]
    fn transform_of_model_is_square_root_map() {
        let sv = s(0.5);
        let h = 1.0 / 128.0;
        let nodes = forward_transform(&model_solution(sv, h)).unwrap();
        let mut worst: f64 = 0.0;
        for t in &nodes {
            let (xn, xm) = (t.x[0], t.x[1]);
            let r = xn.hypot(xm);
            if r < 0.1 {
                continue;
            }
            worst = worst.max((t.y[0] * t.y[0] - (r + xn)).abs());
            worst = worst.max((t.y[1] * t.y[1] - (r - xn)).abs());
        }
        assert!(worst < 1e-3, "{worst}");
        // contact interior maps to y_n = 0
        for t in nodes.iter().filter(|t| t.x[1] == 0.0 && t.x[0] < -0.1) {
            assert!(t.y[0].abs() < 1e-12);
        }
        // nodes near the free boundary map near P
        for t in nodes.iter().filter(|t| t.x[0].abs() <= 2.0 * h && t.x[1] <= 2.0 * h) {
            assert!(t.y[0].hypot(t.y[1]) < 4.0 * h.sqrt());
        }
    }

    #[test]
    fn monotonicity_violation_reported() {
        let sv = s(0.5);
        let g = WeightedGrid::new(1, 1.0, 1.0, 1.0 / 32.0, sv).unwrap();
        let sym = DiscreteSolution::sample(g, |p| w1s(sv, p[0].abs(), p[1])).unwrap();
        assert!(matches!(forward_transform(&sym), Err(Error::MonotonicityViolated(_))));
    }

    #[test]
    fn legendre_function_of_model() {
        let sv = s(0.5);
        let mut errs = Vec::new();
        for h in [1.0 / 64.0, 1.0 / 128.0] {
            let field = legendre_function(&model_solution(sv, h), 0.8, 17).unwrap();
            let g = &field.grid;
            let mut err: f64 = 0.0;
            let mut xerr: f64 = 0.0;
            for i in 0..17 {
                for j in 0..17 {
                    let (a, b) = (g.normal[i], g.normal[j]);
                    let k = g.index(0, i, j);
                    if a >= 0.1 && b >= 0.1 {
                        err = err.max((field.v[k] - eval_v_model(sv, a, b)).abs());
                    }
                    xerr = xerr.max((field.xmap[k][0] - 0.5 * (a * a - b * b)).abs());
                    xerr = xerr.max((field.xmap[k][1] - a * b).abs());
                }
            }
            assert!(field.dirichlet_defect() < 1e-3);
            assert!(field.free_boundary()[0].abs() <= 2.0 * h);
            assert!(xerr < 20.0 * h, "round trip {xerr}");
            errs.push(err);
        }
        assert!(errs[1] < errs[0] && errs[0] < 0.05, "{errs:?}");
    }

    #[test]
    fn dual_relations_closed_form() {
        for v in [0.3, 0.5, 0.7] {
            let sv = s(v);
            for &(a, b) in &[(0.3, 0.6), (0.9, 0.2), (0.5, 0.5)] {
                let j = model_jet::<2>(sv, [a, b]);
                let (xn, xm) = (0.5 * (a * a - b * b), a * b);
                assert!((a.powf(1.0 - 2.0 * v) * j.g[0] + 2.0 * v * xn).abs() < 1e-12);
                assert!((b.powf(2.0 * v - 1.0) * j.g[1] - xm.powf(2.0 * v)).abs() < 1e-12);
                // Legendre value of the model solution at the preimage
                let lv = legendre_value(sv, w1s(sv, xn, xm), xn, xm, a, b);
                assert!((lv - j.v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn functional_vanishes_on_model() {
        for v in [0.25, 0.5, 0.75] {
            let sv = s(v);
            let (mu, res) = calibrate_model_scaling(sv).unwrap();
            assert_eq!(mu, C_STAR);
            assert!(res < 1e-12);
            let pts: Vec<[f64; 2]> = (0..100).map(|i| [0.1 + 0.009 * i as f64, 1.0 - 0.009 * i as f64]).collect();
            let r = eval_f(sv, |y| model_jet(sv, y), None, DerivativeMode::Analytic, &pts).unwrap();
            assert!(r.iter().all(|x| x.abs() < 1e-12));
            let jac: Vec<f64> = pts
                .iter()
                .map(|&y| f_terms(sv, &model_jet(sv, y), y, None).unwrap().jacobian / (y[0] * y[0] + y[1] * y[1]))
                .collect();
            assert!(jac.iter().all(|j| (j - jac[0]).abs() < 1e-12));
            if v != 0.5 {
                let r = eval_f(sv, |y| scaled_model_jet(sv, 1.0, y), None, DerivativeMode::Analytic, &pts).unwrap();
                assert!(r.iter().any(|x| x.abs() > 1e-3));
            }
        }
        let sv = s(0.4);
        let pts = [[0.4, 0.5, 0.3], [-0.2, 0.7, 0.6]];
        let r = eval_f(sv, |y| model_jet(sv, y), None, DerivativeMode::Analytic, &pts).unwrap();
        assert!(r.iter().all(|x| x.abs() < 1e-12));
        let r = eval_f(sv, |y| model_jet(sv, y), None, DerivativeMode::FiniteDifference { step: 1e-3 }, &[[0.4, 0.5]]).unwrap();
        assert!(r[0].abs() < 1e-6);
    }

    #[test]
    fn grid_residual_of_model_field() {
        let sv = s(0.5);
        let grid = QuarterGrid::uniform(0.0, 0, 1.0, 41).unwrap();
        let field = LegendreField::from_fn(sv, grid, |p| {
            (eval_v_model(sv, p.y_n, p.y_np1), 0.5 * (p.y_n * p.y_n - p.y_np1 * p.y_np1), p.y_n * p.y_np1)
        });
        let res = field.residual_map(None).unwrap();
        assert!(res.iter().all(|(_, r)| r.abs() < 1e-10));
        let fits = inverse_asymptotics(&field, &[0.5, 0.25]).unwrap();
        assert!(fits[0].g.abs() < 1e-12);
        assert!((fits[0].a0 - 0.5).abs() < 1e-12 && (fits[0].a1 - 0.5).abs() < 1e-12);
        assert!((fits[0].a1_height - 0.5).abs() < 1e-12);
        assert!(fits[0].residual_exponent.is_none());
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

    #[test]
    fn linearization_matches_grushin_operator() {
        let sv = s(0.3);
        let t_list = [2e-2, 1e-2, 5e-3, 2e-3, 1e-3];
        let mut consts = Vec::new();
        for (c, r) in [([0.5, 0.5], 0.3), ([0.7, 0.35], 0.2)] {
            let samples: Vec<[f64; 2]> = (0..400)
                .map(|i| [c[0] - r + 2.0 * r * (i % 20) as f64 / 19.0, c[1] - r + 2.0 * r * (i / 20) as f64 / 19.0])
                .filter(|p| p[0] > 0.1 && p[1] > 0.1)
                .collect();
            let rep = linearization_check(sv, |y| model_jet(sv, y), bump(c, r), &t_list, &samples).unwrap();
            assert!(rep.defect[4] < 2e-2, "{rep:?}");
            assert!((rep.slope.unwrap() - 1.0).abs() < 0.1);
            consts.push(rep.constant());
        }
        assert!((consts[0] / consts[1] - 1.0).abs() < 0.01);
        assert!((consts[0] - 1.0).abs() < 1e-3);
        let zero = |_: [f64; 2]| Jet::<2>::constant(0.0);
        let rep = linearization_check(sv, |y| model_jet(sv, y), zero, &t_list, &[[0.5, 0.5]]).unwrap();
        assert!(rep.c[0].is_nan() && rep.defect.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn jacobian_of_model_bounded() {
        let sv = s(0.4);
        let sol = model_solution(sv, 1.0 / 128.0);
        let d = jacobian_diag(&sol, &[0.0], &[0.8, 0.4, 0.2]).unwrap();
        assert!(d.injectivity_flag);
        // det of the rescaled square-root map is 1/(2|x|) in [1/2, 1]
        assert!(d.jac_min > 0.35 && d.jac_max < 1.1, "{d:?}");
        let two_to_one = [vec![0.5, 0.2], vec![-0.5, 0.2]];
        let same = [vec![0.1, 0.1], vec![0.1, 0.1]];
        assert!(!injectivity_flag(&two_to_one, &same, 1e-6));
        let _ = w1s_jet::<2>;
    }

    #[test]
    fn diffeo_properties() {
        let a = [0.01, -0.02];
        let y = QuarterPoint::new(vec![0.1, 0.2], 0.1, 0.05).unwrap();
        assert_eq!(diffeo_flow(&[0.0, 0.0], &y, 20), y);
        for far in [
            QuarterPoint::new(vec![0.8, 0.2], 0.1, 0.1).unwrap(),
            QuarterPoint::new(vec![0.1, 0.1], 0.4, 0.4).unwrap(),
        ] {
            assert_eq!(diffeo_flow(&a, &far, 20), far);
        }
        let moved = diffeo_flow(&a, &y, 20);
        assert_eq!((moved.y_n, moved.y_np1), (y.y_n, y.y_np1));
        let samples: Vec<QuarterPoint> = (0..100)
            .map(|i| QuarterPoint::new(vec![-0.9 + 0.018 * i as f64, 0.1], 0.05 * (i % 7) as f64, 0.03 * (i % 5) as f64).unwrap())
            .collect();
        let cs: Vec<f64> = [1e-3, 1e-2, 1e-1]
            .iter()
            .map(|m| diffeo_constant(&[*m, 0.0], &samples, 40))
            .collect();
        assert!(cs.iter().all(|c| (c / cs[0] - 1.0).abs() < 0.05), "{cs:?}");
        assert_eq!(radial_cutoff(0.2), 1.0);
        assert_eq!(radial_cutoff(0.6), 0.0);
    }
}
