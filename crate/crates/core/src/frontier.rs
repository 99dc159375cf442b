//! Free-boundary extraction and diagnostics: leading-order expansion fits,
//! Whitney-patched barrier functions, non-degeneracy and Harnack ratios.

use serde::Serialize;

use crate::closed_forms::{reduced_l_s, w0s, w0s_jet, w1s, FracOrder, C_S};
use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::lsq::{log_log_slope, weighted_lsq};
use crate::solver::DiscreteSolution;

/// Interface points where the contact mask changes along the `x_n` grid lines.
///
/// The crossing is placed at the midpoint of the two thin nodes whose mask
/// differs (linear interpolation of the contact indicator at level 1/2). For
/// `n = 1` the result is a list of abscissae `[x_n]`; for `n = 2` it is a
/// polyline of points `[x_1, x_n]`, one or more per `x_1` column.
pub fn extract_free_boundary(sol: &DiscreteSolution) -> Result<Vec<Vec<f64>>> {
    let g = &sol.grid;
    let mut out = Vec::new();
    let cols = if g.n == 1 { 1 } else { g.dims[0] };
    let len_n = g.dims[g.n - 1];
    let stride_n = if g.n == 1 { 1 } else { g.dims[0] };
    for c in 0..cols {
        let mut prev: Option<(usize, bool)> = None;
        for i in 0..len_n {
            let t = c + i * stride_n;
            if sol.fixed_thin[t] {
                continue;
            }
            let m = sol.contact_mask[t];
            if let Some((pt, pm)) = prev {
                if pm != m {
                    let a = g.thin_point(pt);
                    let b = g.thin_point(t);
                    out.push(a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect());
                }
            }
            prev = Some((t, m));
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyFreeBoundary);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct FreeBoundaryFit {
    pub x0: Vec<f64>,
    pub nu: Vec<f64>,
    pub c: f64,
    pub window_radii: Vec<f64>,
    /// Relative RMS remainder per annulus.
    pub residuals: Vec<f64>,
    /// Absolute RMS remainder per annulus.
    pub remainders: Vec<f64>,
    /// Log-log slope of the absolute remainder; `None` when it is at round-off level.
    pub remainder_exponent: Option<f64>,
}

impl FreeBoundaryFit {
    /// Whether the measured remainder exponent reaches `1 + s + delta`
    /// (a remainder at round-off level passes).
    pub fn remainder_ok(&self, s: FracOrder, delta: f64) -> bool {
        self.remainder_exponent.map_or(true, |e| e >= 1.0 + s.get() + delta)
    }
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub rho_max: f64,
    pub levels: usize,
    pub gauss_newton_steps: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            rho_max: 0.5,
            levels: 5,
            gauss_newton_steps: 30,
        }
    }
}

fn unit_normal(n: usize, theta: f64) -> Vec<f64> {
    if n == 1 {
        vec![1.0]
    } else {
        vec![theta.sin(), theta.cos()]
    }
}

/// Fits `w ~ c * w_{1,s}((x' - x0).nu, x_{n+1})` over dyadic annuli about `x0`.
pub fn fit_expansion(sol: &DiscreteSolution, x0: &[f64], opts: &FitOptions) -> Result<FreeBoundaryFit> {
    let g = &sol.grid;
    let s = g.s;
    if x0.len() != g.n {
        return Err(Error::InvalidInput(format!("x0 has {} coordinates, need {}", x0.len(), g.n)));
    }
    let radii: Vec<f64> = (0..opts.levels).map(|k| opts.rho_max / 2f64.powi(k as i32)).collect();
    let rho_min = 0.5 * radii[radii.len() - 1];
    // (annulus index, thin offset, height, value)
    let mut pts: Vec<(usize, Vec<f64>, f64, f64)> = Vec::new();
    for idx in 0..g.len() {
        let p = g.point(idx);
        let off: Vec<f64> = p[..g.n].iter().zip(x0).map(|(a, b)| a - b).collect();
        let y = p[g.n];
        let rho = (off.iter().map(|v| v * v).sum::<f64>() + y * y).sqrt();
        if rho > opts.rho_max || rho <= rho_min {
            continue;
        }
        let k = radii.iter().rposition(|&r| rho <= r).unwrap();
        pts.push((k, off, y, sol.values[idx]));
    }
    for k in 0..opts.levels {
        if pts.iter().filter(|p| p.0 == k).count() < 3 {
            return Err(Error::InsufficientSamples(format!(
                "annulus of radius {} holds fewer than 3 nodes",
                radii[k]
            )));
        }
    }
    let rhs: Vec<f64> = pts.iter().map(|p| p.3).collect();
    let ones = vec![1.0; pts.len()];
    let model = |theta: f64| -> Vec<(f64, f64)> {
        let nu = unit_normal(g.n, theta);
        pts.iter()
            .map(|(_, off, y, _)| {
                let q: f64 = off.iter().zip(&nu).map(|(a, b)| a * b).sum();
                (w1s(s, q, *y), C_S * w0s(s, q, *y))
            })
            .collect()
    };
    let fit_c = |theta: f64| -> Result<f64> {
        let rows: Vec<Vec<f64>> = model(theta).iter().map(|m| vec![m.0]).collect();
        Ok(weighted_lsq(&rows, &rhs, &ones)?.coeffs[0])
    };
    let mut theta = 0.0;
    let mut c = fit_c(theta)?;
    if g.n == 2 {
        for _ in 0..opts.gauss_newton_steps {
            let nu_t = [theta.cos(), -theta.sin()];
            let m = model(theta);
            let mut rows = Vec::with_capacity(pts.len());
            let mut res = Vec::with_capacity(pts.len());
            for ((_, off, _, v), (wv, dq)) in pts.iter().zip(&m) {
                let dq_dtheta = off[0] * nu_t[0] + off[1] * nu_t[1];
                rows.push(vec![*wv, c * dq * dq_dtheta]);
                res.push(v - c * wv);
            }
            let step = weighted_lsq(&rows, &res, &ones)?.coeffs;
            c += step[0];
            theta += step[1].clamp(-0.2, 0.2);
            if step[1].abs() < 1e-13 && step[0].abs() < 1e-13 * c.abs().max(1.0) {
                break;
            }
        }
        c = fit_c(theta)?;
    }
    let nu = unit_normal(g.n, theta);
    let m = model(theta);
    let mut residuals = vec![0.0; opts.levels];
    let mut remainders = vec![0.0; opts.levels];
    let mut scale: f64 = 0.0;
    for k in 0..opts.levels {
        let (mut num, mut den, mut cnt) = (0.0, 0.0, 0.0);
        for ((kk, _, _, v), (wv, _)) in pts.iter().zip(&m) {
            if *kk == k {
                num += (v - c * wv).powi(2);
                den += v * v;
                cnt += 1.0;
            }
        }
        remainders[k] = (num / cnt).sqrt();
        residuals[k] = if den > 0.0 { (num / den).sqrt() } else { 0.0 };
        scale = scale.max((den / cnt).sqrt());
    }
    let floor = 1e-12 * scale;
    let remainder_exponent = if remainders.iter().all(|r| *r <= floor) {
        None
    } else {
        let clamped: Vec<f64> = remainders.iter().map(|r| r.max(floor)).collect();
        log_log_slope(&radii, &clamped)
    };
    Ok(FreeBoundaryFit {
        x0: x0.to_vec(),
        nu,
        c,
        window_radii: radii,
        residuals,
        remainders,
        remainder_exponent,
    })
}

/// Thin-space graph `Gamma = {x_n = g(x'')}` with contact set `{x_n <= g(x'')}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ThinGraph {
    /// `g = level` (for `n = 1` the free boundary is the point `x_n = level`).
    Flat { level: f64 },
    /// `g(x_1) = amplitude * sin(frequency * x_1)`.
    Sine { amplitude: f64, frequency: f64 },
}

impl ThinGraph {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            ThinGraph::Flat { level } => level,
            ThinGraph::Sine { amplitude, frequency } => amplitude * (frequency * t).sin(),
        }
    }

    pub fn slope(&self, t: f64) -> f64 {
        match *self {
            ThinGraph::Flat { .. } => 0.0,
            ThinGraph::Sine { amplitude, frequency } => amplitude * frequency * (frequency * t).cos(),
        }
    }

    pub fn curvature(&self, t: f64) -> f64 {
        match *self {
            ThinGraph::Flat { .. } => 0.0,
            ThinGraph::Sine { amplitude, frequency } => {
                -amplitude * frequency * frequency * (frequency * t).sin()
            }
        }
    }

    /// Bound on the Lipschitz seminorm of the graph gradient.
    pub fn gradient_seminorm(&self) -> f64 {
        match *self {
            ThinGraph::Flat { .. } => 0.0,
            ThinGraph::Sine { amplitude, frequency } => (amplitude * frequency * frequency).abs(),
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, ThinGraph::Flat { .. })
    }

    /// Parameter of the nearest graph point to the thin point `(x1, x2)`, by
    /// three projected Newton steps from the vertical foot point.
    pub fn foot(&self, x1: f64, x2: f64) -> f64 {
        let mut t = x1;
        for _ in 0..3 {
            let gv = self.value(t) - x2;
            let d1 = (t - x1) + gv * self.slope(t);
            let d2 = 1.0 + self.slope(t).powi(2) + gv * self.curvature(t);
            if d2 > 0.0 {
                t -= d1 / d2;
            }
        }
        t
    }

    /// Distance in the thin space from `x'` to the graph.
    pub fn thin_distance(&self, thin: &[f64]) -> f64 {
        if thin.len() == 1 || self.is_flat() {
            return (thin[thin.len() - 1] - self.value(0.0)).abs();
        }
        let t = self.foot(thin[0], thin[1]);
        (t - thin[0]).hypot(self.value(t) - thin[1])
    }

    /// `dist(x, Gamma)` for `x = (x', x_{n+1})`.
    pub fn dist_gamma(&self, x: &[f64]) -> f64 {
        let d = x.len() - 1;
        self.thin_distance(&x[..d]).hypot(x[d])
    }

    /// `dist(x, Lambda)`, `Lambda = {x_{n+1} = 0, x_n <= g(x'')}`.
    pub fn dist_lambda(&self, x: &[f64]) -> f64 {
        let d = x.len() - 1;
        let gv = if d == 1 { self.value(0.0) } else { self.value(x[0]) };
        if x[d - 1] <= gv {
            x[d]
        } else {
            self.dist_gamma(x)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BarrierSign {
    Lower,
    Upper,
}

#[derive(Clone, Debug, Serialize)]
pub struct WhitneyCube {
    pub center: [f64; 3],
    pub half: f64,
    /// Foot point on `Gamma` of the centre and the in-plane unit normal there.
    pub anchor: [f64; 2],
    pub normal: [f64; 2],
}

impl WhitneyCube {
    pub fn diameter(&self) -> f64 {
        2.0 * self.half * 3f64.sqrt()
    }

    pub fn contains(&self, x: &[f64; 3]) -> bool {
        (0..3).all(|a| (x[a] - self.center[a]).abs() <= self.half)
    }
}

/// Whitney cubes of `[-1,1]^2 x [0,1]` minus `Gamma`, with a smooth partition of unity.
#[derive(Clone, Debug, Serialize)]
pub struct WhitneyCover {
    pub cubes: Vec<WhitneyCube>,
    pub max_depth: usize,
}

/// `1 - S(u)` with the quintic smoothstep `S`, clamped to `[0, 1]`; C^2.
fn smooth_cutoff<const D: usize>(u: Jet<D>) -> Option<Jet<D>> {
    if u.v <= 0.0 {
        return Some(Jet::constant(1.0));
    }
    if u.v >= 1.0 {
        return None;
    }
    let x = u.v;
    let f0 = 1.0 - x * x * x * (10.0 - 15.0 * x + 6.0 * x * x);
    let f1 = -30.0 * x * x * (1.0 - x) * (1.0 - x);
    let f2 = -60.0 * x * (1.0 - x) * (1.0 - 2.0 * x);
    Some(u.chain(f0, f1, f2))
}

const RAMP: f64 = 1.5;

impl WhitneyCover {
    /// Dyadic subdivision: a cube is kept once `diam(Q) <= dist(centre, Gamma)`.
    /// With this rule `dist(Q, Gamma)` lies in `[diam/2, 3.5 diam]`.
    pub fn build(graph: &ThinGraph, max_depth: usize) -> Self {
        let mut stack: Vec<([f64; 3], f64, usize)> = Vec::new();
        for cx in [-0.5, 0.5] {
            for cy in [-0.5, 0.5] {
                stack.push(([cx, cy, 0.5], 0.5, 0));
            }
        }
        let mut cubes = Vec::new();
        while let Some((c, a, depth)) = stack.pop() {
            let diam = 2.0 * a * 3f64.sqrt();
            let dist = graph.dist_gamma(&c);
            if diam <= dist {
                let t = graph.foot(c[0], c[1]);
                let gp = graph.slope(t);
                let norm = (1.0 + gp * gp).sqrt();
                cubes.push(WhitneyCube {
                    center: c,
                    half: a,
                    anchor: [t, graph.value(t)],
                    normal: [-gp / norm, 1.0 / norm],
                });
            } else if depth < max_depth {
                let h = 0.5 * a;
                for dx in [-h, h] {
                    for dy in [-h, h] {
                        for dz in [-h, h] {
                            stack.push(([c[0] + dx, c[1] + dy, c[2] + dz], h, depth + 1));
                        }
                    }
                }
            }
        }
        cubes.sort_by(|p, q| {
            p.center
                .partial_cmp(&q.center)
                .unwrap()
                .then(p.half.partial_cmp(&q.half).unwrap())
        });
        WhitneyCover { cubes, max_depth }
    }

    /// Whether `x` lies in the union of the cubes.
    pub fn covers(&self, x: &[f64; 3]) -> bool {
        self.cubes.iter().any(|q| q.contains(x))
    }

    /// Unnormalized bump of cube `k`: a C^2 piecewise polynomial in
    /// `|x' - c'|^2` and `x_{n+1}^2`, equal to 1 on the cube.
    pub fn bump(&self, k: usize, x: &[Jet<3>; 3]) -> Option<Jet<3>> {
        let q = &self.cubes[k];
        let a = q.half;
        let r1 = a * 2f64.sqrt();
        let r2 = r1 + RAMP * a;
        let dx = x[0] - q.center[0];
        let dy = x[1] - q.center[1];
        if dx.v.abs() > r2 || dy.v.abs() > r2 {
            return None;
        }
        let rho2 = dx * dx + dy * dy;
        let thin = smooth_cutoff((rho2 - r1 * r1) * (1.0 / (r2 * r2 - r1 * r1)))?;
        let t = x[2] * x[2];
        let (lo, hi) = (q.center[2] - a, q.center[2] + a);
        let hi2 = hi + RAMP * a;
        let upper = smooth_cutoff((t - hi * hi) * (1.0 / (hi2 * hi2 - hi * hi)))?;
        let vertical = if lo > 0.0 {
            let lo2 = (lo - RAMP * a).max(0.0);
            smooth_cutoff((t * -1.0 + lo * lo) * (1.0 / (lo * lo - lo2 * lo2)))? * upper
        } else {
            upper
        };
        Some(thin * vertical)
    }

    /// Partition-of-unity functions `eta_k` that are nonzero at `x`.
    pub fn partition(&self, x: [f64; 3]) -> Vec<(usize, Jet<3>)> {
        let v = Jet::<3>::vars(x);
        let bumps: Vec<(usize, Jet<3>)> = (0..self.cubes.len())
            .filter_map(|k| self.bump(k, &v).map(|b| (k, b)))
            .collect();
        let total = bumps.iter().fold(Jet::constant(0.0), |acc, (_, b)| acc + *b);
        bumps.into_iter().map(|(k, b)| (k, b / total)).collect()
    }
}

/// Barrier `h = sum_k eta_k (w_k +- w_k^{1+tau})` built from rotated copies of `w_{0,s}`.
#[derive(Clone, Debug, Serialize)]
pub struct BarrierField {
    pub graph: ThinGraph,
    pub s: FracOrder,
    pub tau: f64,
    pub sign: BarrierSign,
    /// Thin dimension (1 or 2).
    pub n: usize,
    /// `None` for a flat graph (single chart).
    pub cover: Option<WhitneyCover>,
}

#[derive(Clone, Debug)]
pub struct BarrierOptions {
    /// Holder exponent of the graph gradient entering the admissible range of `tau`.
    pub alpha: f64,
    /// Largest admissible Holder seminorm of the graph gradient.
    pub roughness_threshold: f64,
    pub max_depth: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions {
            alpha: 1.0,
            roughness_threshold: 0.5,
            max_depth: 6,
        }
    }
}

pub fn build_barrier(
    graph: ThinGraph,
    n: usize,
    s: FracOrder,
    tau: f64,
    sign: BarrierSign,
    opts: &BarrierOptions,
) -> Result<BarrierField> {
    let sv = s.get();
    let max = (opts.alpha / sv).min((1.0 - sv) / sv);
    if !(tau > 0.0 && tau < max) {
        return Err(Error::TauOutOfRange { tau, max });
    }
    if !(1..=2).contains(&n) || (n == 1 && !graph.is_flat()) {
        return Err(Error::InvalidInput("curved graphs need n = 2".into()));
    }
    let rough = graph.gradient_seminorm();
    if rough > opts.roughness_threshold {
        return Err(Error::GraphTooRough(rough));
    }
    let cover = (!graph.is_flat()).then(|| WhitneyCover::build(&graph, opts.max_depth));
    Ok(BarrierField {
        graph,
        s,
        tau,
        sign,
        n,
        cover,
    })
}

impl BarrierField {
    fn profile<const D: usize>(&self, q: Jet<D>, y: Jet<D>) -> Jet<D> {
        let w = w0s_jet(self.s, q, y);
        let wt = w.powf(1.0 + self.tau);
        match self.sign {
            BarrierSign::Lower => w + wt,
            BarrierSign::Upper => w - wt,
        }
    }

    /// Value, gradient and Hessian at `x` (`D = n + 1`). For a curved graph the
    /// field is only defined on the Whitney-covered region and is NaN elsewhere.
    pub fn jet<const D: usize>(&self, x: [f64; D]) -> Jet<D> {
        match &self.cover {
            None => {
                let v = Jet::<D>::vars(x);
                self.profile(v[D - 2] - self.graph.value(0.0), v[D - 1])
            }
            Some(cover) => {
                assert_eq!(D, 3, "curved barriers live in three dimensions");
                let mut x3 = [0.0; 3];
                x3.copy_from_slice(&x[..3]);
                let v = Jet::<3>::vars(x3);
                let mut acc = Jet::<3>::constant(0.0);
                for (k, eta) in cover.partition(x3) {
                    let q = &cover.cubes[k];
                    let proj = (v[0] - q.anchor[0]) * q.normal[0] + (v[1] - q.anchor[1]) * q.normal[1];
                    acc = acc + eta * self.profile(proj, v[2]);
                }
                let mut out = Jet::<D>::constant(acc.v);
                for i in 0..3 {
                    out.g[i] = acc.g[i];
                    for k in 0..3 {
                        out.h[i][k] = acc.h[i][k];
                    }
                }
                out
            }
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        if self.n == 1 {
            self.jet::<2>([x[0], x[1]]).v
        } else {
            self.jet::<3>([x[0], x[1], x[2]]).v
        }
    }

    /// `L_s h / (x_{n+1}^{1-2s} dist(x, Gamma)^{-2+s+s tau})`.
    pub fn normalized_l_s(&self, x: &[f64]) -> f64 {
        let red = if self.n == 1 {
            reduced_l_s(self.s, &self.jet::<2>([x[0], x[1]]), x[1])
        } else {
            reduced_l_s(self.s, &self.jet::<3>([x[0], x[1], x[2]]), x[2])
        };
        let sv = self.s.get();
        red / self.graph.dist_gamma(x).powf(-2.0 + sv + sv * self.tau)
    }
}

/// Extreme of the normalized `L_s h` over the samples: the minimum for a lower
/// barrier (positive certifies a subsolution), the maximum for an upper one.
pub fn subsolution_check(b: &BarrierField, points: &[Vec<f64>]) -> f64 {
    let vals = points.iter().map(|p| b.normalized_l_s(p));
    match b.sign {
        BarrierSign::Lower => vals.fold(f64::INFINITY, f64::min),
        BarrierSign::Upper => vals.fold(f64::NEG_INFINITY, f64::max),
    }
}

/// `dist(x,Gamma)^s (dist(x,Lambda)/dist(x,Gamma))^{2s}`.
pub fn nondegeneracy_profile(s: FracOrder, d_gamma: f64, d_lambda: f64) -> f64 {
    let sv = s.get();
    d_gamma.powf(sv) * (d_lambda / d_gamma).powf(2.0 * sv)
}

/// Smallest ratio `h(x) / nondegeneracy_profile(x)` of a barrier over the samples.
pub fn barrier_nondegeneracy(b: &BarrierField, points: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .map(|p| {
            let prof = nondegeneracy_profile(b.s, b.graph.dist_gamma(p), b.graph.dist_lambda(p));
            b.value(p) / prof
        })
        .fold(f64::INFINITY, f64::min)
}

/// Box `[-half_width, half_width]^n x [0, height]` restricting diagnostics.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SubBox {
    pub half_width: f64,
    pub height: f64,
}

impl SubBox {
    pub fn contains(&self, p: &[f64]) -> bool {
        let d = p.len() - 1;
        p[..d].iter().all(|v| v.abs() <= self.half_width + 1e-12) && p[d] <= self.height + 1e-12
    }
}

/// Largest `c` with `w >= c * dist(x,Gamma)^s (dist(x,Lambda)/dist(x,Gamma))^{2s}`
/// over the nodes of `sub_box` that lie off `Lambda`.
///
/// `gamma` are free-boundary points (thin coordinates); `Lambda` is the set of
/// contact nodes of `sol`.
pub fn nondegeneracy_check(sol: &DiscreteSolution, gamma: &[Vec<f64>], sub_box: SubBox) -> f64 {
    let g = &sol.grid;
    let contact: Vec<Vec<f64>> = (0..g.thin_len())
        .filter(|&t| sol.contact_mask[t])
        .map(|t| g.thin_point(t))
        .collect();
    let thin_dist = |p: &[f64], set: &[Vec<f64>]| -> f64 {
        set.iter()
            .map(|q| q.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    };
    let mut c = f64::INFINITY;
    for idx in 0..g.len() {
        let p = g.point(idx);
        if !sub_box.contains(&p) {
            continue;
        }
        let y = p[g.n];
        let d_gamma = thin_dist(&p[..g.n], gamma).hypot(y);
        let d_lambda = if contact.is_empty() {
            f64::INFINITY
        } else {
            thin_dist(&p[..g.n], &contact).hypot(y)
        };
        if d_lambda == 0.0 || d_gamma == 0.0 {
            continue;
        }
        let prof = nondegeneracy_profile(g.s, d_gamma, d_lambda.min(d_gamma));
        c = c.min(sol.values[idx] / prof);
    }
    c.max(0.0)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct HarnackRatio {
    pub inf: f64,
    pub sup: f64,
}

/// Infimum and supremum of `u2 / u1` over the nodes of `sub_box` farther than
/// `collar_cells * h` from the contact set of `u1`.
pub fn harnack_ratio(
    u1: &DiscreteSolution,
    u2: &DiscreteSolution,
    sub_box: SubBox,
    collar_cells: f64,
    floor: f64,
) -> Result<HarnackRatio> {
    let g = &u1.grid;
    if u2.grid != *g {
        return Err(Error::InvalidInput("solutions live on different grids".into()));
    }
    let contact: Vec<Vec<f64>> = (0..g.thin_len())
        .filter(|&t| u1.contact_mask[t])
        .map(|t| g.thin_point(t))
        .collect();
    let collar = collar_cells * g.h;
    let (mut inf, mut sup) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut low = 0;
    for idx in 0..g.len() {
        let p = g.point(idx);
        if !sub_box.contains(&p) {
            continue;
        }
        let y = p[g.n];
        let d = contact
            .iter()
            .map(|q| q.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + y * y)
            .fold(f64::INFINITY, f64::min)
            .sqrt();
        if d <= collar {
            continue;
        }
        let a = u1.values[idx];
        if a < floor {
            low += 1;
            continue;
        }
        let r = u2.values[idx] / a;
        inf = inf.min(r);
        sup = sup.max(r);
    }
    if low > 0 {
        return Err(Error::DivisionNearZero { floor, count: low });
    }
    if !inf.is_finite() {
        return Err(Error::InsufficientSamples("no nodes outside the collar".into()));
    }
    Ok(HarnackRatio { inf, sup })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::WeightedGrid;
    use crate::spectral::HomogeneousMode;

    fn s(v: f64) -> FracOrder {
        FracOrder::new(v).unwrap()
    }

    fn model_solution(sv: FracOrder, h: f64, shift: f64) -> DiscreteSolution {
        let g = WeightedGrid::new(1, 1.0, 1.0, h, sv).unwrap();
        DiscreteSolution::sample(g, |p| w1s(sv, p[0] - shift, p[1])).unwrap()
    }

    #[test]
    fn free_boundary_of_model() {
        let h = 1.0 / 64.0;
        let fb = extract_free_boundary(&model_solution(s(0.4), h, 0.0)).unwrap();
        assert_eq!(fb.len(), 1);
        assert!(fb[0][0].abs() <= 2.0 * h);
        let fb = extract_free_boundary(&model_solution(s(0.4), h, 0.3)).unwrap();
        assert!((fb[0][0] - 0.3).abs() <= 2.0 * h);
        let g = WeightedGrid::new(1, 1.0, 1.0, h, s(0.4)).unwrap();
        let zero = DiscreteSolution::sample(g, |_| 0.0).unwrap();
        assert!(matches!(extract_free_boundary(&zero), Err(Error::EmptyFreeBoundary)));
    }

    #[test]
    fn fit_of_exact_model() {
        let sv = s(0.6);
        let sol = model_solution(sv, 1.0 / 64.0, 0.0);
        let fit = fit_expansion(&sol, &[0.0], &FitOptions::default()).unwrap();
        assert!((fit.c - 1.0).abs() < 1e-3);
        assert_eq!(fit.nu, vec![1.0]);
        assert!(fit.remainder_ok(sv, 0.1));
        let mut scaled = sol.clone();
        scaled.values.iter_mut().for_each(|v| *v *= 2.5);
        let fit2 = fit_expansion(&scaled, &[0.0], &FitOptions::default()).unwrap();
        assert!((fit2.c - 2.5 * fit.c).abs() < 1e-12);
    }

    #[test]
    fn rotated_normal_recovered() {
        let sv = s(0.5);
        let h = 1.0 / 128.0;
        let g = WeightedGrid::new(2, 0.25, 0.25, h, sv).unwrap();
        let th = 10f64.to_radians();
        let nu = [th.sin(), th.cos()];
        let sol = DiscreteSolution::sample(g, |p| w1s(sv, p[0] * nu[0] + p[1] * nu[1], p[2])).unwrap();
        let opts = FitOptions {
            rho_max: 0.25,
            levels: 4,
            ..FitOptions::default()
        };
        let fit = fit_expansion(&sol, &[0.0, 0.0], &opts).unwrap();
        let err = (fit.nu[0] * nu[0] + fit.nu[1] * nu[1]).clamp(-1.0, 1.0).acos().to_degrees();
        assert!(err < 1.0, "angle error {err}");
        assert!((fit.c - 1.0).abs() < 1e-3);
    }

    #[test]
    fn flat_barrier_values() {
        let sv = s(0.5);
        let b = build_barrier(ThinGraph::Flat { level: 0.0 }, 1, sv, 0.25, BarrierSign::Lower, &Default::default())
            .unwrap();
        // L_s(w^{1+tau}) at (0,1) is 2 s^2 tau (1+tau); L_s w = 0
        let j = b.jet::<2>([0.0, 1.0]);
        let l = reduced_l_s(sv, &j, 1.0);
        assert!((l - 2.0 * 0.25 * 0.25 * 1.25).abs() < 1e-12);
        assert_eq!(b.value(&[-0.5, 0.0]), 0.0);
        assert!(matches!(
            build_barrier(ThinGraph::Flat { level: 0.0 }, 1, sv, 1.0, BarrierSign::Lower, &Default::default()),
            Err(Error::TauOutOfRange { .. })
        ));
        let rough = ThinGraph::Sine { amplitude: 1.0, frequency: 3.0 };
        assert!(matches!(
            build_barrier(rough, 2, sv, 0.25, BarrierSign::Lower, &Default::default()),
            Err(Error::GraphTooRough(_))
        ));
    }

    #[test]
    fn subsolution_constant_scales_with_tau() {
        let sv = s(0.5);
        let pts: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let a = 0.05 + 3.0 * i as f64 / 50.0;
                vec![0.5 * a.cos(), 0.5 * a.sin()]
            })
            .collect();
        let c = |tau: f64| {
            let b = build_barrier(ThinGraph::Flat { level: 0.0 }, 1, sv, tau, BarrierSign::Lower, &Default::default())
                .unwrap();
            subsolution_check(&b, &pts)
        };
        let (c1, c2) = (c(1e-3), c(2e-3));
        assert!(c1 > 0.0);
        assert!((c2 / c1 - 2.0).abs() < 0.01);
    }

    #[test]
    fn whitney_geometry_and_partition() {
        let graph = ThinGraph::Sine { amplitude: 0.05, frequency: 1.0 };
        let cover = WhitneyCover::build(&graph, 5);
        assert!(!cover.cubes.is_empty());
        for q in &cover.cubes {
            // dist(Q, Gamma) sampled on a 5^3 lattice of the closed cube
            let mut dmin = f64::INFINITY;
            for i in 0..5 {
                for j in 0..5 {
                    for k in 0..5 {
                        let x = [
                            q.center[0] + q.half * (i as f64 / 2.0 - 1.0),
                            q.center[1] + q.half * (j as f64 / 2.0 - 1.0),
                            q.center[2] + q.half * (k as f64 / 2.0 - 1.0),
                        ];
                        dmin = dmin.min(graph.dist_gamma(&x));
                    }
                }
            }
            assert!(q.diameter() >= 0.25 * dmin && q.diameter() <= 4.0 * dmin);
        }
        for x in [[0.3, 0.4, 0.2], [-0.6, -0.5, 0.0], [0.1, 0.7, 0.6]] {
            assert!(cover.covers(&x));
            let parts = cover.partition(x);
            let sum = parts.iter().fold(Jet::<3>::constant(0.0), |acc, (_, e)| acc + *e);
            assert!((sum.v - 1.0).abs() < 1e-12);
            for i in 0..3 {
                assert!(sum.g[i].abs() < 1e-9);
            }
            if x[2] == 0.0 {
                for (_, e) in &parts {
                    assert_eq!(e.g[2], 0.0);
                }
            }
        }
    }

    #[test]
    fn curved_barrier_near_graph() {
        let graph = ThinGraph::Sine { amplitude: 0.05, frequency: 1.0 };
        let b = build_barrier(graph, 2, s(0.5), 0.25, BarrierSign::Lower, &Default::default()).unwrap();
        let mut pts = Vec::new();
        for i in 0..12 {
            for j in 0..12 {
                for k in 0..6 {
                    let x = vec![-0.25 + i as f64 / 22.0, -0.25 + j as f64 / 22.0, 0.01 + k as f64 / 22.0];
                    if x.iter().map(|v| v * v).sum::<f64>() <= 0.0625 && graph.dist_gamma(&x) >= 0.03 {
                        pts.push(x);
                    }
                }
            }
        }
        assert!(pts.len() > 100);
        assert!(subsolution_check(&b, &pts) > 0.0);
        assert!(barrier_nondegeneracy(&b, &pts) > 0.0);
        for x1 in [-0.4, 0.0, 0.3] {
            let x = [x1, graph.value(x1) - 0.2, 0.0];
            assert_eq!(b.value(&x), 0.0);
        }
        // L_s of the partition sum vanishes
        let cover = b.cover.as_ref().unwrap();
        let x = [0.1, 0.3, 0.2];
        let sum = cover.partition(x).iter().fold(Jet::<3>::constant(0.0), |acc, (_, e)| acc + *e);
        assert!(reduced_l_s(s(0.5), &sum, x[2]).abs() < 1e-8);
    }

    #[test]
    fn nondegeneracy_of_profiles() {
        let sv = s(0.4);
        let sub = SubBox { half_width: 0.5, height: 0.5 };
        let mut cs = Vec::new();
        for h in [1.0 / 32.0, 1.0 / 64.0] {
            let g = WeightedGrid::new(1, 1.0, 1.0, h, sv).unwrap();
            let sol = DiscreteSolution::sample(g, |p| w0s(sv, p[0], p[1])).unwrap();
            let fb = extract_free_boundary(&sol).unwrap();
            let c = nondegeneracy_check(&sol, &fb, sub);
            assert!(c > 0.5);
            let mut scaled = sol.clone();
            scaled.values.iter_mut().for_each(|v| *v *= 3.0);
            assert!((nondegeneracy_check(&scaled, &fb, sub) - 3.0 * c).abs() < 1e-12);
            cs.push(c);
        }
        assert!((cs[0] - cs[1]).abs() < 0.2);
        let g = WeightedGrid::new(1, 1.0, 1.0, 1.0 / 32.0, sv).unwrap();
        let mut zero = DiscreteSolution::sample(g, |_| 0.0).unwrap();
        zero.contact_mask.iter_mut().enumerate().for_each(|(i, m)| *m = i < 16);
        assert_eq!(nondegeneracy_check(&zero, &[vec![0.0]], sub), 0.0);
    }

    #[test]
    fn harnack_ratios() {
        let sv = s(0.3);
        let g = WeightedGrid::new(1, 1.0, 1.0, 1.0 / 32.0, sv).unwrap();
        let u1 = DiscreteSolution::sample(g.clone(), |p| w0s(sv, p[0], p[1])).unwrap();
        let u2 = DiscreteSolution::sample(g.clone(), |p| 3.0 * w0s(sv, p[0], p[1])).unwrap();
        let sub = SubBox { half_width: 0.5, height: 0.5 };
        let r = harnack_ratio(&u1, &u2, sub, 1.0, 1e-12).unwrap();
        assert!((r.inf - 3.0).abs() < 1e-12 && (r.sup - 3.0).abs() < 1e-12);
        let m1 = HomogeneousMode::new(1, sv);
        let u3 = DiscreteSolution::sample(g.clone(), |p| m1.eval(p[0], p[1])).unwrap();
        let r = harnack_ratio(&u1, &u3, sub, 1.0, 1e-12).unwrap();
        assert!(r.inf.is_finite() && r.sup.is_finite());
        assert!(r.inf < 0.0);
        let zero = DiscreteSolution::sample(g, |_| 0.0).unwrap();
        assert!(matches!(
            harnack_ratio(&zero, &u2, sub, 1.0, 1e-12),
            Err(Error::DivisionNearZero { .. }) | Err(Error::InsufficientSamples(_))
        ));
    }
}
