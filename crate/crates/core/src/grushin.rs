//! Baouendi–Grushin geometry on the quarter space `{y_n >= 0, y_{n+1} >= 0}`:
//! quasi-metric and dilations, Grushin-homogeneous polynomials, the weighted
//! operator `Delta_{G,s}`, the square-root domain opening, and the
//! leading-order decompositions used near `P = {y_n = y_{n+1} = 0}`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::closed_forms::{apply_l_s, FracOrder};
use crate::error::{Error, Result};
use crate::jet::{fd_jet, Jet};
use crate::lsq::{log_log_slope, weighted_lsq};
use crate::poly::{monomials_of_degree, Polynomial};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuarterPoint {
    pub y_tan: Vec<f64>,
    pub y_n: f64,
    pub y_np1: f64,
}

impl QuarterPoint {
    pub fn new(y_tan: Vec<f64>, y_n: f64, y_np1: f64) -> Result<Self> {
        if !(y_n >= 0.0 && y_np1 >= 0.0) || y_tan.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPoint(format!(
                "quarter point needs y_n, y_n+1 >= 0, got ({y_n}, {y_np1})"
            )));
        }
        Ok(QuarterPoint { y_tan, y_n, y_np1 })
    }

    /// Coordinates `(y'', y_n, y_{n+1})` as one vector.
    pub fn coords(&self) -> Vec<f64> {
        let mut v = self.y_tan.clone();
        v.push(self.y_n);
        v.push(self.y_np1);
        v
    }

    pub fn from_coords(c: &[f64]) -> Result<Self> {
        let d = c.len();
        if d < 2 {
            return Err(Error::InvalidPoint("need at least two coordinates".into()));
        }
        Self::new(c[..d - 2].to_vec(), c[d - 2], c[d - 1])
    }
}

/// Grushin dilation `(lambda^2 y'', lambda y_n, lambda y_{n+1})`.
pub fn dilation(lambda: f64, p: &QuarterPoint) -> QuarterPoint {
    QuarterPoint {
        y_tan: p.y_tan.iter().map(|v| lambda * lambda * v).collect(),
        y_n: lambda * p.y_n,
        y_np1: lambda * p.y_np1,
    }
}

/// Quasi-metric equivalent to the Carnot–Carathéodory distance of the Grushin vector fields.
pub fn quasi_metric(p: &QuarterPoint, q: &QuarterPoint) -> f64 {
    let dt = p
        .y_tan
        .iter()
        .zip(&q.y_tan)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let normal = (p.y_n - q.y_n).abs() + (p.y_np1 - q.y_np1).abs();
    if dt == 0.0 {
        return normal;
    }
    let den = p.y_n.abs() + p.y_np1.abs() + q.y_n.abs() + q.y_np1.abs() + dt.sqrt();
    normal + dt / den
}

/// Largest ratio `d(p,r) / (d(p,q) + d(q,r))` over seeded random triples in
/// `[-1,1]^{n-1} x [0,1]^2`.
pub fn quasi_triangle_constant(n: usize, triples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        let scale = 10f64.powf(-3.0 * rng.gen::<f64>());
        let tan: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
        QuarterPoint {
            y_tan: tan,
            y_n: scale * rng.gen::<f64>(),
            y_np1: scale * rng.gen::<f64>(),
        }
    };
    let mut k: f64 = 0.0;
    for _ in 0..triples {
        let p = draw(&mut rng);
        // q and r cluster near p at a random scale so small-distance regimes are sampled
        let eps = 10f64.powf(-4.0 * rng.gen::<f64>());
        let near = |rng: &mut ChaCha8Rng, base: &QuarterPoint| QuarterPoint {
            y_tan: base.y_tan.iter().map(|v| v + eps * rng.gen_range(-1.0..1.0)).collect(),
            y_n: (base.y_n + eps * rng.gen_range(-1.0..1.0)).abs(),
            y_np1: (base.y_np1 + eps * rng.gen_range(-1.0..1.0)).abs(),
        };
        let (q, r) = if rng.gen_bool(0.5) {
            (near(&mut rng, &p), near(&mut rng, &p))
        } else {
            (draw(&mut rng), draw(&mut rng))
        };
        let den = quasi_metric(&p, &q) + quasi_metric(&q, &r);
        if den > 0.0 {
            k = k.max(quasi_metric(&p, &r) / den);
        }
    }
    k
}

/// Polynomial in `(y'', y_n, y_{n+1})` graded by the Grushin degree
/// `sum_{j<n} 2 beta_j + beta_n + beta_{n+1}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrushinPolynomial {
    pub poly: Polynomial,
}

pub fn grushin_degree(beta: &[u32]) -> u32 {
    let d = beta.len();
    beta[..d - 2].iter().map(|b| 2 * b).sum::<u32>() + beta[d - 2] + beta[d - 1]
}

impl GrushinPolynomial {
    /// Basis of the Grushin-homogeneous monomials of degree `k` in `n + 1` variables.
    pub fn homogeneous_basis(n: usize, k: u32) -> Vec<Vec<u32>> {
        (0..=2 * k)
            .flat_map(|d| monomials_of_degree(n + 1, d))
            .filter(|b| grushin_degree(b) == k)
            .collect()
    }

    pub fn from_terms(n: usize, terms: &[(Vec<u32>, f64)]) -> Self {
        let mut poly = Polynomial::zero(n + 1);
        for (b, c) in terms {
            poly.add_term(b.clone(), *c);
        }
        GrushinPolynomial { poly }
    }

    /// Whether the polynomial lies in `P_k` (all Grushin degrees at most `k`).
    pub fn in_p_k(&self, k: u32) -> bool {
        self.poly.terms.keys().all(|b| grushin_degree(b) <= k)
    }

    /// Whether every monomial has Grushin degree exactly `k`.
    pub fn is_homogeneous(&self, k: u32) -> bool {
        self.poly.terms.keys().all(|b| grushin_degree(b) == k)
    }

    pub fn eval(&self, p: &QuarterPoint) -> f64 {
        self.poly.eval(&p.coords())
    }
}

/// Exponent `int + s_mult * s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SExponent {
    pub int: i32,
    pub s_mult: i32,
}

impl SExponent {
    pub const fn new(int: i32, s_mult: i32) -> Self {
        SExponent { int, s_mult }
    }

    pub fn value(self, s: f64) -> f64 {
        self.int as f64 + self.s_mult as f64 * s
    }

    fn shift(self, int: i32, s_mult: i32) -> Self {
        SExponent::new(self.int + int, self.s_mult + s_mult)
    }
}

/// Finite sums `sum c y''^beta y_n^{p} y_{n+1}^{q}` with exponents of the form `k + m s`,
/// closed under `Delta_{G,s}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrushinExpr {
    pub s: f64,
    pub tan_vars: usize,
    pub terms: BTreeMap<(Vec<u32>, SExponent, SExponent), f64>,
}

impl GrushinExpr {
    pub fn zero(s: FracOrder, tan_vars: usize) -> Self {
        GrushinExpr {
            s: s.get(),
            tan_vars,
            terms: BTreeMap::new(),
        }
    }

    /// `y_n^{p} * poly(y'', y_n, y_{n+1})`.
    pub fn weighted_polynomial(s: FracOrder, p: SExponent, poly: &Polynomial) -> Self {
        let tv = poly.nvars - 2;
        let mut e = Self::zero(s, tv);
        for (beta, c) in &poly.terms {
            e.add_term(
                beta[..tv].to_vec(),
                p.shift(beta[tv] as i32, 0),
                SExponent::new(beta[tv + 1] as i32, 0),
                *c,
            );
        }
        e
    }

    pub fn add_term(&mut self, tan: Vec<u32>, a: SExponent, b: SExponent, c: f64) {
        if c == 0.0 {
            return;
        }
        let e = self.terms.entry((tan, a, b)).or_insert(0.0);
        *e += c;
        if *e == 0.0 {
            self.terms.retain(|_, v| *v != 0.0);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, p: &QuarterPoint) -> f64 {
        self.terms
            .iter()
            .map(|((tan, a, b), c)| {
                let t: f64 = tan.iter().zip(&p.y_tan).map(|(&k, v)| v.powi(k as i32)).product();
                c * t * p.y_n.powf(a.value(self.s)) * p.y_np1.powf(b.value(self.s))
            })
            .sum()
    }

    /// Exact symbolic `Delta_{G,s}`.
    pub fn delta_gs(&self) -> Self {
        let s = self.s;
        let mut out = GrushinExpr {
            s,
            tan_vars: self.tan_vars,
            terms: BTreeMap::new(),
        };
        for ((tan, a, b), c) in &self.terms {
            // (ab)^{1-2s}(a^2 + b^2) Lap'' u
            for j in 0..tan.len() {
                if tan[j] >= 2 {
                    let mut t = tan.clone();
                    t[j] -= 2;
                    let k = c * (tan[j] * (tan[j] - 1)) as f64;
                    out.add_term(t.clone(), a.shift(3, -2), b.shift(1, -2), k);
                    out.add_term(t, a.shift(1, -2), b.shift(3, -2), k);
                }
            }
            // d_a((ab)^{1-2s} d_a u) and the analogous b term
            let pa = a.value(s);
            let two_s = 2.0 * s;
            out.add_term(tan.clone(), a.shift(-1, -2), b.shift(1, -2), c * pa * (pa - two_s));
            let pb = b.value(s);
            out.add_term(tan.clone(), a.shift(1, -2), b.shift(-1, -2), c * pb * (pb - two_s));
        }
        out
    }
}

/// `Delta_{G,s} u` from an analytic jet in `(y'', y_n, y_{n+1})`.
pub fn delta_gs_jet<const D: usize>(s: FracOrder, u: &Jet<D>, y: [f64; D]) -> f64 {
    let (a, b) = (y[D - 2], y[D - 1]);
    let e = s.weight_exp();
    let w = (a * b).powf(e);
    let tan_lap: f64 = (0..D - 2).map(|i| u.h[i][i]).sum();
    let normal = u.h[D - 2][D - 2] + u.h[D - 1][D - 1];
    w * ((a * a + b * b) * tan_lap + normal) + e * w * (u.g[D - 2] / a + u.g[D - 1] / b)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum DerivativeMode {
    Analytic,
    /// Fourth-order centred differences with the given step.
    FiniteDifference { step: f64 },
}

/// `Delta_{G,s} u` at `y` by fourth-order finite differences of point values.
pub fn delta_gs_fd<const D: usize>(
    s: FracOrder,
    u: impl Fn([f64; D]) -> f64,
    y: [f64; D],
    step: f64,
) -> Result<f64> {
    if y[D - 2] < 2.0 * step || y[D - 1] < 2.0 * step {
        return Err(Error::AxisSingularity(format!(
            "point ({}, {}) within two steps of an axis",
            y[D - 2],
            y[D - 1]
        )));
    }
    Ok(delta_gs_jet(s, &fd_jet(u, y, step), y))
}

/// Square-root opening map `psi(y) = (y'', (y_n^2 - y_{n+1}^2)/2, y_n y_{n+1})` on jets.
pub fn open_map<const D: usize>(y: &[Jet<D>; D]) -> [Jet<D>; D] {
    let mut x = *y;
    let (a, b) = (y[D - 2], y[D - 1]);
    x[D - 2] = (a * a - b * b) * 0.5;
    x[D - 1] = a * b;
    x
}

/// Largest relative defect of `Delta_{G,s}(u o psi)(y) = (y_n^2 + y_{n+1}^2) (L_s u)(psi(y))`.
///
/// `u` maps jets of the half-space coordinates `(x'', x_n, x_{n+1})` to a jet.
/// The defect is measured against the size of the individual terms of `L_s u`.
pub fn open_domain_check<const D: usize>(
    s: FracOrder,
    u: impl Fn(&[Jet<D>; D]) -> Jet<D>,
    samples: &[[f64; D]],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for y in samples {
        let (a, b) = (y[D - 2], y[D - 1]);
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::AxisSingularity(format!("sample ({a}, {b}) on an axis")));
        }
        let yj = Jet::<D>::vars(*y);
        let lhs = delta_gs_jet(s, &u(&open_map(&yj)), *y);
        let xv = open_map(&yj).map(|j| j.v);
        let ux = u(&Jet::<D>::vars(xv));
        let xn1 = xv[D - 1];
        let rho2 = a * a + b * b;
        let rhs = rho2 * apply_l_s(s, &ux, xn1);
        let w = xn1.powf(s.weight_exp());
        let scale = rho2
            * w
            * ((0..D).map(|i| ux.h[i][i].abs()).sum::<f64>() + (s.weight_exp() * ux.g[D - 1] / xn1).abs());
        let defect = (lhs - rhs).abs() / scale.max(f64::MIN_POSITIVE);
        worst = worst.max(if scale == 0.0 { (lhs - rhs).abs() } else { defect });
    }
    Ok(worst)
}

/// A value sampled at a quarter-space point.
#[derive(Clone, Debug, Serialize)]
pub struct QuarterSample {
    pub y: QuarterPoint,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenpolyFit {
    /// `a_0`, then `a_i` for each tangential variable, then `a_n`, `a_{n+1}`.
    pub coefficients: Vec<f64>,
    pub radii: Vec<f64>,
    /// Weighted averaged L^2 distance to the fitted template per Grushin ball.
    pub remainders: Vec<f64>,
    /// Log-log slope of the remainders; `None` at round-off level.
    pub decay_slope: Option<f64>,
    /// `(1+s) a_n + (1-s) a_{n+1}`, zero exactly when the template is `Delta_{G,s}`-harmonic.
    pub harmonicity_defect: f64,
}

/// Fits `y_n^{2s}(a_0 + sum a_i (y_i - y0_i) + a_n y_n^2 + a_{n+1} y_{n+1}^2)` on
/// quasi-metric balls about the `P`-point `(y0'', 0, 0)`, weight `(y_n y_{n+1})^{1-2s}`.
pub fn fit_grushin_eigenpoly(
    samples: &[QuarterSample],
    s: FracOrder,
    center_tan: &[f64],
    radii: &[f64],
) -> Result<EigenpolyFit> {
    let sv = s.get();
    let center = QuarterPoint {
        y_tan: center_tan.to_vec(),
        y_n: 0.0,
        y_np1: 0.0,
    };
    let tv = center_tan.len();
    let mut coefficients = Vec::new();
    let mut remainders = Vec::new();
    let mut scale: f64 = 0.0;
    for &r in radii {
        let inside: Vec<&QuarterSample> = samples
            .iter()
            .filter(|q| q.y.y_n > 0.0 && q.y.y_np1 > 0.0 && quasi_metric(&q.y, &center) <= r)
            .collect();
        if inside.len() < tv + 4 {
            return Err(Error::InsufficientSamples(format!(
                "{} samples in the Grushin ball of radius {r}",
                inside.len()
            )));
        }
        let rows: Vec<Vec<f64>> = inside
            .iter()
            .map(|q| {
                let p = q.y.y_n.powf(2.0 * sv);
                let mut row = vec![p];
                row.extend(q.y.y_tan.iter().zip(center_tan).map(|(y, c)| p * (y - c)));
                row.push(p * q.y.y_n * q.y.y_n);
                row.push(p * q.y.y_np1 * q.y.y_np1);
                row
            })
            .collect();
        let rhs: Vec<f64> = inside.iter().map(|q| q.value).collect();
        let wts: Vec<f64> = inside
            .iter()
            .map(|q| (q.y.y_n * q.y.y_np1).powf(s.weight_exp()))
            .collect();
        let fit = weighted_lsq(&rows, &rhs, &wts)?;
        let wsum: f64 = wts.iter().sum();
        let data: f64 = rhs.iter().zip(&wts).map(|(v, w)| w * v * v).sum::<f64>() / wsum;
        scale = scale.max(data.sqrt());
        remainders.push(fit.residual / wsum.sqrt());
        coefficients = fit.coeffs;
    }
    let floor = 1e-11 * scale;
    let decay_slope = if remainders.iter().all(|r| *r <= floor) {
        None
    } else {
        log_log_slope(radii, &remainders)
    };
    let an = coefficients[tv + 1];
    let anp1 = coefficients[tv + 2];
    Ok(EigenpolyFit {
        harmonicity_defect: (1.0 + sv) * an + (1.0 - sv) * anp1,
        coefficients,
        radii: radii.to_vec(),
        remainders,
        decay_slope,
    })
}

/// Tensor grid on `[-t, t]^{n-1} x [0, L]^2` used for decompositions near `P`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuarterGrid {
    /// Tangential node coordinates (empty for `n = 1`).
    pub tan: Vec<f64>,
    /// Node coordinates shared by `y_n` and `y_{n+1}`, starting at 0.
    pub normal: Vec<f64>,
}

impl QuarterGrid {
    pub fn new(tan: Vec<f64>, normal: Vec<f64>) -> Result<Self> {
        if normal.len() < 3 || normal[0] != 0.0 || normal.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("normal nodes must start at 0 and increase".into()));
        }
        Ok(QuarterGrid { tan, normal })
    }

    pub fn uniform(tan_half_width: f64, tan_count: usize, extent: f64, count: usize) -> Result<Self> {
        let tan = if tan_count == 0 {
            Vec::new()
        } else if tan_count == 1 {
            vec![0.0]
        } else {
            (0..tan_count)
                .map(|i| -tan_half_width + 2.0 * tan_half_width * i as f64 / (tan_count - 1) as f64)
                .collect()
        };
        let normal = (0..count).map(|i| extent * i as f64 / (count - 1) as f64).collect();
        Self::new(tan, normal)
    }

    /// Number of tangential columns (1 when there is no tangential variable).
    pub fn columns(&self) -> usize {
        self.tan.len().max(1)
    }

    pub fn len(&self) -> usize {
        self.columns() * self.normal.len() * self.normal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, col: usize, i: usize, j: usize) -> usize {
        let m = self.normal.len();
        (col * m + i) * m + j
    }

    pub fn point(&self, col: usize, i: usize, j: usize) -> QuarterPoint {
        QuarterPoint {
            y_tan: self.tan.get(col).map(|v| vec![*v]).unwrap_or_default(),
            y_n: self.normal[i],
            y_np1: self.normal[j],
        }
    }

    pub fn sample(&self, f: impl Fn(&QuarterPoint) -> f64) -> Vec<f64> {
        let m = self.normal.len();
        let mut out = vec![0.0; self.len()];
        for c in 0..self.columns() {
            for i in 0..m {
                for j in 0..m {
                    out[self.index(c, i, j)] = f(&self.point(c, i, j));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct XYDecomposition {
    pub tan: Vec<f64>,
    pub c0: Vec<f64>,
    pub a0: Vec<f64>,
    pub a1: Vec<f64>,
    /// Largest `|C_0|` over the collar, `C_0 = y_n^{-2s} r^{-(2+2 alpha-eps)} (v - leading)`.
    pub c0_remainder_sup: f64,
    /// Holder-`alpha` seminorm estimates of `c0'`, `a0`, `a1` along `y''` (0 for `n = 1`).
    pub holder_c0_prime: f64,
    pub holder_a0: f64,
    pub holder_a1: f64,
    /// Quasi-metric Holder-`eps` seminorm estimate of `C_0`.
    pub remainder_seminorm: f64,
}

#[derive(Clone, Debug)]
pub struct DecomposeOptions {
    pub alpha: f64,
    pub eps: f64,
    /// Collar radius `|(y_n, y_{n+1})| <= collar` used by the leading-term fit.
    pub collar: f64,
    pub boundary_tol: f64,
    pub pairs: usize,
    pub seed: u64,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions {
            alpha: 0.5,
            eps: 0.25,
            collar: 0.5,
            boundary_tol: 1e-10,
            pairs: 10_000,
            seed: 7,
        }
    }
}

fn holder_seminorm(x: &[f64], f: &[f64], alpha: f64) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..x.len() {
        for j in 0..i {
            let d = (x[i] - x[j]).abs();
            if d > 0.0 {
                best = best.max((f[i] - f[j]).abs() / d.powf(alpha));
            }
        }
    }
    best
}

/// Leading-order decomposition `v = c0 y_n^{2s} + a0 y_n^{2+2s} + a1 y_n^{2s} y_{n+1}^2 + remainder`.
pub fn xy_decompose(
    grid: &QuarterGrid,
    values: &[f64],
    s: FracOrder,
    opts: &DecomposeOptions,
) -> Result<XYDecomposition> {
    let sv = s.get();
    let m = grid.normal.len();
    if opts.eps > opts.alpha {
        return Err(Error::InvalidInput("eps must not exceed alpha".into()));
    }
    let scale = values.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1e-300);
    for c in 0..grid.columns() {
        for j in 0..m {
            let v = values[grid.index(c, 0, j)];
            if v.abs() > opts.boundary_tol * scale.max(1.0) {
                return Err(Error::BoundaryConditionViolated(v));
            }
        }
    }
    let (mut c0, mut a0, mut a1) = (Vec::new(), Vec::new(), Vec::new());
    let mut rem_pts = Vec::new();
    let mut sup: f64 = 0.0;
    for c in 0..grid.columns() {
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        let mut pts = Vec::new();
        for i in 1..m {
            for j in 0..m {
                let p = grid.point(c, i, j);
                if p.y_n.hypot(p.y_np1) > opts.collar {
                    continue;
                }
                let q = p.y_n.powf(2.0 * sv);
                rows.push(vec![q, q * p.y_n * p.y_n, q * p.y_np1 * p.y_np1]);
                rhs.push(values[grid.index(c, i, j)]);
                pts.push(p);
            }
        }
        let fit = weighted_lsq(&rows, &rhs, &vec![1.0; rows.len()])?;
        for ((row, v), p) in rows.iter().zip(&rhs).zip(pts) {
            let lead: f64 = row.iter().zip(&fit.coeffs).map(|(a, b)| a * b).sum();
            let r = p.y_n.hypot(p.y_np1);
            let c0v = (v - lead) / (p.y_n.powf(2.0 * sv) * r.powf(2.0 + 2.0 * opts.alpha - opts.eps));
            sup = sup.max(c0v.abs());
            rem_pts.push((p, c0v));
        }
        c0.push(fit.coeffs[0]);
        a0.push(fit.coeffs[1]);
        a1.push(fit.coeffs[2]);
    }
    let (holder_c0_prime, holder_a0, holder_a1) = if grid.tan.len() >= 3 {
        let t = &grid.tan;
        let dc: Vec<f64> = (1..t.len() - 1)
            .map(|k| (c0[k + 1] - c0[k - 1]) / (t[k + 1] - t[k - 1]))
            .collect();
        (
            holder_seminorm(&t[1..t.len() - 1], &dc, opts.alpha),
            holder_seminorm(t, &a0, opts.alpha),
            holder_seminorm(t, &a1, opts.alpha),
        )
    } else {
        (0.0, 0.0, 0.0)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut semi: f64 = 0.0;
    if rem_pts.len() >= 2 {
        for _ in 0..opts.pairs {
            let i = rng.gen_range(0..rem_pts.len());
            let j = rng.gen_range(0..rem_pts.len());
            let d = quasi_metric(&rem_pts[i].0, &rem_pts[j].0);
            if d > 0.0 {
                semi = semi.max((rem_pts[i].1 - rem_pts[j].1).abs() / d.powf(opts.eps));
            }
        }
    }
    Ok(XYDecomposition {
        tan: grid.tan.clone(),
        c0,
        a0,
        a1,
        c0_remainder_sup: sup,
        holder_c0_prime,
        holder_a0,
        holder_a1,
        remainder_seminorm: semi,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct YDecomposition {
    pub tan: Vec<f64>,
    pub f0: Vec<f64>,
    /// Largest `|f - y_n y_{n+1}^{1-2s} f0|` relative to the data over the collar.
    pub f1_relative: f64,
}

/// Fits `f = y_n y_{n+1}^{1-2s} f0(y'') + f1` column by column over the collar.
pub fn y_decompose(
    grid: &QuarterGrid,
    values: &[f64],
    s: FracOrder,
    collar: f64,
) -> Result<YDecomposition> {
    let e = s.weight_exp();
    let m = grid.normal.len();
    let mut f0 = Vec::new();
    let (mut worst, mut scale): (f64, f64) = (0.0, 0.0);
    for c in 0..grid.columns() {
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for i in 1..m {
            for j in 1..m {
                let p = grid.point(c, i, j);
                if p.y_n.hypot(p.y_np1) <= collar {
                    rows.push(vec![p.y_n * p.y_np1.powf(e)]);
                    rhs.push(values[grid.index(c, i, j)]);
                }
            }
        }
        let fit = weighted_lsq(&rows, &rhs, &vec![1.0; rows.len()])?;
        for (r, v) in rows.iter().zip(&rhs) {
            worst = worst.max((v - r[0] * fit.coeffs[0]).abs());
            scale = scale.max(v.abs());
        }
        f0.push(fit.coeffs[0]);
    }
    Ok(YDecomposition {
        tan: grid.tan.clone(),
        f0,
        f1_relative: if scale > 0.0 { worst / scale } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_forms::{eval_v_model, w1s_jet, C_STAR};

    fn s(v: f64) -> FracOrder {
        FracOrder::new(v).unwrap()
    }

    fn qp(t: f64, a: f64, b: f64) -> QuarterPoint {
        QuarterPoint::new(vec![t], a, b).unwrap()
    }

    #[test]
    fn quasi_metric_examples() {
        let p = qp(0.3, 0.2, 0.7);
        assert_eq!(quasi_metric(&p, &p), 0.0);
        let (a, b) = (qp(0.1, 0.0, 0.0), qp(0.5, 0.0, 0.0));
        assert!((quasi_metric(&a, &b) - 0.4f64.sqrt()).abs() < 1e-15);
        let q = qp(-0.4, 0.1, 0.9);
        assert_eq!(quasi_metric(&p, &q), quasi_metric(&q, &p));
        for lambda in [0.5, 2.0, 4.0] {
            let d = quasi_metric(&dilation(lambda, &p), &dilation(lambda, &q));
            assert_eq!(d, lambda * quasi_metric(&p, &q));
        }
        for lambda in [0.3, 5.0] {
            let d = quasi_metric(&dilation(lambda, &p), &dilation(lambda, &q));
            assert!((d - lambda * quasi_metric(&p, &q)).abs() < 1e-14);
        }
        assert!(quasi_triangle_constant(2, 2000, 1) <= 4.0);
        assert!(QuarterPoint::new(vec![], -0.1, 0.0).is_err());
    }

    #[test]
    fn homogeneous_polynomials_dilate() {
        let basis = GrushinPolynomial::homogeneous_basis(2, 3);
        assert!(basis.contains(&vec![1, 1, 0]));
        assert!(basis.contains(&vec![0, 0, 3]));
        assert!(!basis.contains(&vec![1, 2, 0]));
        let terms: Vec<(Vec<u32>, f64)> = basis.iter().enumerate().map(|(i, b)| (b.clone(), 0.3 + i as f64)).collect();
        let p = GrushinPolynomial::from_terms(2, &terms);
        assert!(p.is_homogeneous(3) && p.in_p_k(3) && !p.in_p_k(2));
        let y = qp(0.4, 0.3, 0.8);
        for lambda in [0.3, 2.0, 5.0] {
            let lhs = p.eval(&dilation(lambda, &y));
            let rhs = lambda.powi(3) * p.eval(&y);
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn symbolic_identities() {
        for v in [0.2, 0.5, 0.8] {
            let sv = s(v);
            let pn = GrushinExpr::weighted_polynomial(sv, SExponent::new(0, 2), &Polynomial::constant(3, 1.0));
            assert!(pn.delta_gs().is_zero());
            let p1 = GrushinExpr::weighted_polynomial(sv, SExponent::new(0, 2), &Polynomial::monomial(vec![1, 0, 0], 1.0));
            assert!(p1.delta_gs().is_zero());
            let (an, anp1) = (0.7, -1.3);
            let mut quad = Polynomial::monomial(vec![0, 2, 0], an);
            quad.add_term(vec![0, 0, 2], anp1);
            let lq = GrushinExpr::weighted_polynomial(sv, SExponent::new(0, 2), &quad).delta_gs();
            for y in [qp(0.1, 0.3, 0.6), qp(-0.5, 0.9, 0.2)] {
                let expect = 4.0 * ((1.0 + v) * an + (1.0 - v) * anp1) * y.y_n * y.y_np1.powf(1.0 - 2.0 * v);
                assert!((lq.eval(&y) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jet_and_fd_agree_with_symbolic() {
        let sv = s(0.35);
        let mut poly = Polynomial::monomial(vec![2, 1, 0], 0.8);
        poly.add_term(vec![0, 0, 2], -0.4);
        poly.add_term(vec![1, 2, 0], 1.1);
        let e = GrushinExpr::weighted_polynomial(sv, SExponent::new(0, 2), &poly);
        let target = e.delta_gs();
        let y = [0.2, 0.5, 0.6];
        let u = |v: &[Jet<3>; 3]| v[1].powf(0.7) * poly.jet(v);
        let an = delta_gs_jet(sv, &u(&Jet::vars(y)), y);
        let ex = target.eval(&qp(y[0], y[1], y[2]));
        assert!((an - ex).abs() < 1e-12);
        let val = |x: [f64; 3]| u(&Jet::vars(x)).v;
        let e1 = (delta_gs_fd(sv, val, y, 0.02).unwrap() - ex).abs();
        let e2 = (delta_gs_fd(sv, val, y, 0.01).unwrap() - ex).abs();
        assert!(e1 / e2 > 10.0, "order check {e1} {e2}");
        assert!(matches!(delta_gs_fd(sv, val, [0.0, 0.01, 0.5], 0.01), Err(Error::AxisSingularity(_))));
    }

    #[test]
    fn domain_opening() {
        let sv = s(0.3);
        let samples: Vec<[f64; 3]> = (0..50)
            .map(|i| [0.1 * i as f64 - 2.0, 0.2 + 0.013 * i as f64, 0.9 - 0.011 * i as f64])
            .collect();
        assert!(open_domain_check(sv, |x| x[1], &samples).unwrap() < 1e-12);
        assert!(open_domain_check(sv, |x| x[2] * x[2], &samples).unwrap() < 1e-12);
        assert!(open_domain_check(sv, |x| w1s_jet(sv, x[1], x[2]), &samples).unwrap() < 1e-10);
        assert!(open_domain_check(sv, |x| x[0] * x[0] * x[2], &samples).unwrap() < 1e-12);
    }

    #[test]
    fn model_is_y_shaped() {
        let sv = s(0.3);
        let mut poly = Polynomial::monomial(vec![0, 2, 0], -C_STAR * 0.3 / 1.3);
        poly.add_term(vec![0, 0, 2], C_STAR);
        let l = GrushinExpr::weighted_polynomial(sv, SExponent::new(0, 2), &poly).delta_gs();
        let y = qp(0.0, 0.4, 0.7);
        let expect = 2.0 * (1.0 - 0.6) * 0.4 * 0.7f64.powf(0.4);
        assert!((l.eval(&y) - expect).abs() < 1e-12);
        let grid = QuarterGrid::uniform(0.5, 5, 1.0, 21).unwrap();
        let vals = grid.sample(|p| l.eval(p));
        let d = y_decompose(&grid, &vals, sv, 0.8).unwrap();
        assert!(d.f0.iter().all(|f| (f - 0.8).abs() < 1e-10));
        assert!(d.f1_relative < 1e-10);
    }

    fn template_samples(f: impl Fn(f64, f64) -> f64) -> Vec<QuarterSample> {
        let mut out = Vec::new();
        for i in 1..=60 {
            for j in 1..=60 {
                let (a, b) = (i as f64 / 60.0, j as f64 / 60.0);
                out.push(QuarterSample {
                    y: QuarterPoint::new(vec![], a, b).unwrap(),
                    value: f(a, b),
                });
            }
        }
        out
    }

    #[test]
    fn eigenpoly_fits() {
        let sv = s(0.4);
        let p = 0.8;
        let radii = [1.0, 0.7, 0.5];
        let t = template_samples(|a, b| a.powf(p) * (0.3 + 0.5 * a * a - 0.2 * b * b));
        let fit = fit_grushin_eigenpoly(&t, sv, &[], &radii).unwrap();
        assert!((fit.coefficients[0] - 0.3).abs() < 1e-10);
        assert!((fit.coefficients[1] - 0.5).abs() < 1e-9);
        assert!((fit.coefficients[2] + 0.2).abs() < 1e-9);
        assert!(fit.decay_slope.is_none());
        let m = template_samples(|a, b| eval_v_model(sv, a, b));
        let fit = fit_grushin_eigenpoly(&m, sv, &[], &radii).unwrap();
        assert!(fit.coefficients[0].abs() < 1e-10);
        assert!((fit.coefficients[1] + C_STAR * 0.4 / 1.4).abs() < 1e-9);
        assert!((fit.coefficients[2] - C_STAR).abs() < 1e-9);
        let manufactured = template_samples(|a, b| a.powf(p) * (0.3 + (a * a + b * b).powf(1.25)));
        let radii = [0.8, 0.4, 0.2, 0.1];
        let fit = fit_grushin_eigenpoly(&manufactured, sv, &[], &radii).unwrap();
        let slope = fit.decay_slope.unwrap();
        assert!((slope - (2.0 + 2.0 * 0.4 + 0.5)).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn xy_decomposition() {
        let sv = s(0.4);
        let grid = QuarterGrid::uniform(1.0, 9, 0.6, 25).unwrap();
        let vals = grid.sample(|p| eval_v_model(sv, p.y_n, p.y_np1));
        let d = xy_decompose(&grid, &vals, sv, &DecomposeOptions::default()).unwrap();
        for k in 0..9 {
            assert!(d.c0[k].abs() < 1e-10);
            assert!((d.a0[k] + C_STAR * 0.4 / 1.4).abs() < 1e-10);
            assert!((d.a1[k] - C_STAR).abs() < 1e-10);
        }
        assert!(d.c0_remainder_sup < 1e-8 && d.holder_a0 < 1e-8);
        let vals = grid.sample(|p| p.y_n.powf(0.8) * p.y_tan[0].sin());
        let d = xy_decompose(&grid, &vals, sv, &DecomposeOptions::default()).unwrap();
        for (k, t) in grid.tan.iter().enumerate() {
            assert!((d.c0[k] - t.sin()).abs() < 1e-10);
            assert!(d.a0[k].abs() < 1e-10 && d.a1[k].abs() < 1e-10);
        }
        let bad = grid.sample(|p| 1.0 + p.y_n);
        assert!(matches!(
            xy_decompose(&grid, &bad, sv, &DecomposeOptions::default()),
            Err(Error::BoundaryConditionViolated(_))
        ));
    }
}
