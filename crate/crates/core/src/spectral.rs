//! Homogeneous solutions of `L_s u = 0` with Dirichlet, Neumann and slit
//! (mixed Dirichlet-Neumann) data on the thin space.
//!
//! In two dimensions the slit modes are `r^{k+s} z^s h(z)` with
//! `z = (1 + x_n/r)/2` and `h` a terminating hypergeometric polynomial. Higher
//! dimensional bases are products of thin-space polynomials with these modes,
//! corrected by radial powers so that every element is an exact solution.

use num_rational::BigRational;
use num_traits::One;
use serde::Serialize;

use crate::closed_forms::{r_plus_xn, r_plus_xn_jet, w0s, w0s_jet, FracOrder};
use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::lsq::{log_log_slope, weighted_lsq};
use crate::poly::{monomials_of_degree, Polynomial};

/// `lambda^2 = k(k+1) - s(s-1)`, the separation constant of the `k`-th slit mode.
pub fn eigenvalue(k: usize, s: FracOrder) -> f64 {
    let (k, s) = (k as f64, s.get());
    k * (k + 1.0) - s * (s - 1.0)
}

/// Ratio `a_{m+1} / a_m` of consecutive series coefficients.
pub fn recurrence_ratio(m: usize, k: usize, s: f64) -> f64 {
    let (m, k) = (m as f64, k as f64);
    (m * (m + 1.0) - k * (k + 1.0)) / (m * m + 2.0 * m + m * s + 1.0 + s)
}

/// Series coefficients `a_0 = 1, ..., a_k` of `h(z)` for the `k`-th mode.
pub fn hypergeom_coeffs(k: usize, s: FracOrder) -> Vec<f64> {
    let mut a = vec![1.0];
    for m in 0..k {
        let next = a[m] * recurrence_ratio(m, k, s.get());
        a.push(next);
    }
    a
}

/// Exact rational version of the recurrence for rational `s`. Returns the
/// coefficients `a_0..a_k` together with the value the recurrence produces at
/// `m = k`, which is exactly zero (the series terminates).
pub fn hypergeom_coeffs_exact(k: usize, s: &BigRational) -> (Vec<BigRational>, BigRational) {
    let step = |m: usize, a: &BigRational| -> BigRational {
        let mm = BigRational::from_integer(m.into());
        let kk = BigRational::from_integer(k.into());
        let one = BigRational::one();
        let two = BigRational::from_integer(2.into());
        let num = &mm * (&mm + &one) - &kk * (&kk + &one);
        let den = &mm * &mm + &two * &mm + &mm * s + &one + s;
        num / den * a
    };
    let mut a = vec![BigRational::one()];
    for m in 0..k {
        let next = step(m, &a[m]);
        a.push(next);
    }
    let tail = step(k, &a[k]);
    (a, tail)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomogeneousMode {
    pub k: usize,
    pub s: FracOrder,
    pub coeffs: Vec<f64>,
    pub eigenvalue: f64,
    pub homogeneity: f64,
}

impl HomogeneousMode {
    pub fn new(k: usize, s: FracOrder) -> Self {
        HomogeneousMode {
            k,
            s,
            coeffs: hypergeom_coeffs(k, s),
            eigenvalue: eigenvalue(k, s),
            homogeneity: k as f64 + s.get(),
        }
    }

    /// `r^{k+s} z^s h(z)`, written as `2^{-s} w_{0,s} * sum_m a_m r^{k-m} ((r+x_n)/2)^m`.
    pub fn eval(&self, x_n: f64, x_np1: f64) -> f64 {
        let r = x_n.hypot(x_np1);
        if r == 0.0 {
            return 0.0;
        }
        let half = 0.5 * r_plus_xn(x_n, x_np1);
        let poly: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(m, a)| a * r.powi((self.k - m) as i32) * half.powi(m as i32))
            .sum();
        2f64.powf(-self.s.get()) * w0s(self.s, x_n, x_np1) * poly
    }

    pub fn jet<const D: usize>(&self, x_n: Jet<D>, x_np1: Jet<D>) -> Jet<D> {
        let r = (x_n * x_n + x_np1 * x_np1).sqrt();
        let half = r_plus_xn_jet(x_n, x_np1) * 0.5;
        let mut poly = Jet::constant(0.0);
        for (m, a) in self.coeffs.iter().enumerate() {
            poly = poly + r.powi((self.k - m) as i32) * half.powi(m as i32) * *a;
        }
        w0s_jet(self.s, x_n, x_np1) * poly * 2f64.powf(-self.s.get())
    }
}

/// Exact integral of `t^e` over `[a, b]` times the smooth factor `(sin m / m)^e`
/// at the midpoint `m`, mirrored about `pi/2` so that the power singularity is
/// always taken at the nearer endpoint of `(0, pi)`.
fn sin_power_integral(a: f64, b: f64, e: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let m = 0.5 * (a + b);
    let (lo, hi, mm) = if m < 0.5 * pi {
        (a, b, m)
    } else {
        (pi - b, pi - a, pi - m)
    };
    let smooth = (mm.sin() / mm).powf(e);
    smooth * (hi.powf(e + 1.0) - lo.max(0.0).powf(e + 1.0)) / (e + 1.0)
}

/// Number of eigenvalues of the symmetric tridiagonal matrix `(d, e)` below `x`.
fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = d[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..d.len() {
        let prev = if q == 0.0 { f64::EPSILON * (1.0 + x.abs()) } else { q };
        q = d[i] - x - e[i - 1] * e[i - 1] / prev;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// First `count` eigenvalues of
/// `-sin^{2s-1} (sin^{1-2s} u')' = lambda^2 u` on `(0, pi)`, `u(pi) = 0`,
/// weighted Neumann at `0`, by a conservative finite-difference scheme.
///
/// Nodes `phi_i = i pi / N`. The mass of each node is the integral of
/// `sin^{1-2s}` over its dual cell and the stiffness of each cell is the
/// harmonic mean `1 / int sin^{2s-1}`; both integrals treat the endpoint power
/// singularity exactly. The symmetric generalized problem is reduced to a
/// tridiagonal eigenproblem and solved by Sturm bisection.
pub fn sl_eigen_oracle(s: FracOrder, grid_size: usize, count: usize) -> Result<Vec<f64>> {
    if grid_size < 100 || count == 0 || count > 10 {
        return Err(Error::InvalidInput(format!(
            "grid_size = {grid_size} (need >= 100), count = {count} (need 1..=10)"
        )));
    }
    let n = grid_size;
    let sv = s.get();
    let h = std::f64::consts::PI / n as f64;
    let phi = |i: usize| i as f64 * h;
    let mut mass = vec![0.0; n + 1];
    let mut stiff = vec![0.0; n];
    for i in 0..n {
        let (a, b) = (phi(i), phi(i + 1));
        let c = 0.5 * (a + b);
        mass[i] += sin_power_integral(a, c, 1.0 - 2.0 * sv);
        mass[i + 1] += sin_power_integral(c, b, 1.0 - 2.0 * sv);
        stiff[i] = 1.0 / sin_power_integral(a, b, 2.0 * sv - 1.0);
    }
    // Unknowns are nodes 0..n-1; node n carries the Dirichlet condition.
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n - 1];
    for i in 0..n {
        d[i] += stiff[i];
        if i + 1 < n {
            d[i + 1] += stiff[i];
            e[i] = -stiff[i];
        }
    }
    let scale: Vec<f64> = mass[..n].iter().map(|m| 1.0 / m.sqrt()).collect();
    for i in 0..n {
        d[i] *= scale[i] * scale[i];
        if i + 1 < n {
            e[i] *= scale[i] * scale[i + 1];
        }
    }
    if d.iter().chain(&e).any(|v| !v.is_finite()) {
        return Err(Error::SolverFailure("non-finite matrix entry".into()));
    }
    let upper = (0..n)
        .map(|i| {
            let off = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
            d[i] + off
        })
        .fold(0.0, f64::max);
    let mut out = Vec::with_capacity(count);
    for j in 0..count {
        // smallest x with more than j eigenvalues below it
        let (mut lo, mut hi) = (0.0, upper);
        if sturm_count(&d, &e, hi) <= j {
            return Err(Error::SolverFailure(format!("eigenvalue {j} not bracketed")));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if sturm_count(&d, &e, mid) > j {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi.max(1.0) {
                break;
            }
        }
        out.push(0.5 * (lo + hi));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
    MixedDN,
}

/// `coef * |x|^{2 radial_pow} * x_{n+1}^{normal_pow} * poly`.
#[derive(Clone, Debug, Serialize)]
pub struct BasisTerm {
    pub coef: f64,
    pub radial_pow: u32,
    pub normal_pow: f64,
    pub poly: Polynomial,
}

/// Sum of terms, multiplied by a two-dimensional slit mode for mixed data.
/// Polynomials act on `x''` (mixed data) or on `x'` (Dirichlet/Neumann).
#[derive(Clone, Debug, Serialize)]
pub struct BasisElement {
    pub terms: Vec<BasisTerm>,
    pub mode: Option<HomogeneousMode>,
    /// Largest scaled residual `|L_s u| r^{2-kappa} / x_{n+1}^{1-2s}` over the check points.
    pub max_residual: f64,
}

impl BasisElement {
    pub fn jet<const D: usize>(&self, x: [f64; D]) -> Jet<D> {
        let v = Jet::<D>::vars(x);
        let rho2 = v.iter().fold(Jet::constant(0.0), |acc, c| acc + *c * *c);
        let mut acc = Jet::constant(0.0);
        for t in &self.terms {
            let mut term = t.poly.jet(&v[..t.poly.nvars]) * t.coef;
            if t.radial_pow > 0 {
                term = term * rho2.powi(t.radial_pow as i32);
            }
            if t.normal_pow != 0.0 {
                term = term * v[D - 1].powf(t.normal_pow);
            }
            acc = acc + term;
        }
        match &self.mode {
            Some(m) => acc * m.jet(v[D - 2], v[D - 1]),
            None => acc,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let d = x.len();
        let rho2: f64 = x.iter().map(|c| c * c).sum();
        let mut acc = 0.0;
        for t in &self.terms {
            acc += t.coef
                * rho2.powi(t.radial_pow as i32)
                * if t.normal_pow != 0.0 { x[d - 1].powf(t.normal_pow) } else { 1.0 }
                * t.poly.eval(&x[..t.poly.nvars]);
        }
        match &self.mode {
            Some(m) => acc * m.eval(x[d - 2], x[d - 1]),
            None => acc,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HomogeneousBasis {
    pub kind: BoundaryKind,
    pub n: usize,
    pub kappa: f64,
    pub basis: Vec<BasisElement>,
}

fn integer_offset(x: f64) -> Option<u32> {
    let r = x.round();
    ((x - r).abs() < 1e-9 && r >= 0.0).then_some(r as u32)
}

/// Terms `sum_j c_j w^j (Lap^j P)` where `w` is either `|x|^2` (radial) or
/// `x_{n+1}^2` (normal) and `c_{j+1} = -c_j / denom(j)`.
fn corrected_terms(
    p: &Polynomial,
    base_normal_pow: f64,
    radial: bool,
    denom: impl Fn(u32) -> f64,
) -> Vec<BasisTerm> {
    let mut out = Vec::new();
    let mut c = 1.0;
    let mut q = p.clone();
    let mut j = 0u32;
    while !q.is_zero() {
        out.push(BasisTerm {
            coef: c,
            radial_pow: if radial { j } else { 0 },
            normal_pow: base_normal_pow + if radial { 0.0 } else { 2.0 * j as f64 },
            poly: q.clone(),
        });
        c = -c / denom(j);
        q = q.laplacian();
        j += 1;
    }
    out
}

fn l_s_scaled_residual<const D: usize>(s: FracOrder, e: &BasisElement, kappa: f64) -> f64 {
    let pts: [[f64; 3]; 6] = [
        [0.3, -0.4, 0.5],
        [-0.7, 0.2, 0.3],
        [0.1, 0.8, 0.1],
        [0.5, -0.9, 0.6],
        [-0.2, -0.3, 0.9],
        [0.6, 0.4, 0.25],
    ];
    let mut worst: f64 = 0.0;
    for p in pts {
        let mut x = [0.0; D];
        x.copy_from_slice(&p[3 - D..]);
        let jet = e.jet(x);
        let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        let res = crate::closed_forms::reduced_l_s(s, &jet, x[D - 1]);
        worst = worst.max(res.abs() * r.powf(2.0 - kappa));
    }
    worst
}

/// Basis of `kappa`-homogeneous solutions with the given thin-space data in
/// dimension `n + 1` (`n` in 1..=2). An empty basis is returned when `kappa`
/// is not an admissible homogeneity.
pub fn enumerate_homogeneous(
    kind: BoundaryKind,
    kappa: f64,
    n: usize,
    s: FracOrder,
) -> Result<HomogeneousBasis> {
    if !(kappa >= 0.0) {
        return Err(Error::InvalidInput(format!("kappa = {kappa}")));
    }
    if !(1..=2).contains(&n) {
        return Err(Error::InvalidInput(format!("thin dimension n = {n} not in 1..=2")));
    }
    let sv = s.get();
    let nf = n as f64;
    let mut basis = Vec::new();
    match kind {
        BoundaryKind::MixedDN => {
            if let Some(total) = integer_offset(kappa - sv) {
                for m in 0..=total {
                    let d = total - m;
                    let mode = HomogeneousMode::new(m as usize, s);
                    for exps in monomials_of_degree(n - 1, d) {
                        let p = Polynomial::monomial(exps, 1.0);
                        let terms = corrected_terms(&p, 0.0, true, |j| {
                            let j = j as f64;
                            2.0 * (j + 1.0) * (nf - 2.0 + 2.0 * d as f64 - 2.0 * j + 2.0 * m as f64)
                        });
                        basis.push(BasisElement {
                            terms,
                            mode: Some(mode.clone()),
                            max_residual: 0.0,
                        });
                    }
                }
            }
        }
        BoundaryKind::Dirichlet => {
            if let Some(d) = integer_offset(kappa - 2.0 * sv) {
                for exps in monomials_of_degree(n, d) {
                    let p = Polynomial::monomial(exps, 1.0);
                    let terms = corrected_terms(&p, 2.0 * sv, false, |j| {
                        let j = j as f64;
                        (2.0 * sv + 2.0 * j + 2.0) * (2.0 * j + 2.0)
                    });
                    basis.push(BasisElement {
                        terms,
                        mode: None,
                        max_residual: 0.0,
                    });
                }
            }
        }
        BoundaryKind::Neumann => {
            if let Some(d) = integer_offset(kappa) {
                for exps in monomials_of_degree(n, d) {
                    let p = Polynomial::monomial(exps, 1.0);
                    let terms = corrected_terms(&p, 0.0, false, |j| {
                        let j = j as f64;
                        (2.0 * j + 2.0) * (2.0 * j + 2.0 - 2.0 * sv)
                    });
                    basis.push(BasisElement {
                        terms,
                        mode: None,
                        max_residual: 0.0,
                    });
                }
            }
        }
    }
    for e in &mut basis {
        e.max_residual = if n == 1 {
            l_s_scaled_residual::<2>(s, e, kappa)
        } else {
            l_s_scaled_residual::<3>(s, e, kappa)
        };
    }
    Ok(HomogeneousBasis {
        kind,
        n,
        kappa,
        basis,
    })
}

/// Sample of a field on the upper half space; `x` has `n + 1` coordinates with
/// `x_{n+1} > 0`.
#[derive(Clone, Debug)]
pub struct Sample {
    pub x: Vec<f64>,
    pub value: f64,
}

/// Cell-centred samples of `f` on `[-radius, radius]^n x (0, radius]` restricted
/// to the half ball, with `m` cells per unit length.
pub fn half_ball_samples(n: usize, radius: f64, m: usize, f: impl Fn(&[f64]) -> f64) -> Vec<Sample> {
    let cells = ((radius * m as f64).ceil() as usize).max(1);
    let h = radius / cells as f64;
    let mut out = Vec::new();
    let mut idx = vec![0usize; n + 1];
    loop {
        let mut x = Vec::with_capacity(n + 1);
        for (a, &i) in idx.iter().enumerate() {
            if a < n {
                x.push(-radius + (i as f64 + 0.5) * h);
            } else {
                x.push((i as f64 + 0.5) * h);
            }
        }
        if x.iter().map(|c| c * c).sum::<f64>() <= radius * radius {
            let value = f(&x);
            out.push(Sample { x, value });
        }
        let mut a = 0;
        loop {
            if a == n + 1 {
                return out;
            }
            idx[a] += 1;
            let limit = if a < n { 2 * cells } else { cells };
            if idx[a] < limit {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RadiusFit {
    pub radius: f64,
    pub coefficients: Vec<f64>,
    /// Weighted averaged L2 norm of the remainder on the half ball.
    pub remainder: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundaryFit {
    pub kind: BoundaryKind,
    pub names: Vec<String>,
    /// Coefficients fitted on the smallest half ball.
    pub coefficients: Vec<f64>,
    pub per_radius: Vec<RadiusFit>,
    /// Log-log slope of the remainder in the radius; `None` when every remainder
    /// is at round-off level relative to the data.
    pub decay_exponent: Option<f64>,
}

/// Template columns and their names for the leading boundary expansion.
fn template(kind: BoundaryKind, s: FracOrder, x: &[f64]) -> (Vec<f64>, Vec<String>) {
    let d = x.len();
    let n = d - 1;
    let y = x[n];
    let sv = s.get();
    let mut cols = Vec::new();
    let mut names = Vec::new();
    match kind {
        BoundaryKind::Dirichlet => {
            let base = y.powf(2.0 * sv);
            cols.push(base);
            names.push("a".to_string());
            for j in 0..n {
                cols.push(base * x[j]);
                names.push(format!("b_{}", j + 1));
            }
            cols.push(y.powf(1.0 + 2.0 * sv));
            names.push("e".to_string());
        }
        BoundaryKind::Neumann => {
            cols.push(1.0);
            names.push("c".to_string());
            for j in 0..n {
                cols.push(x[j]);
                names.push(format!("a_{}", j + 1));
            }
            for i in 0..n {
                for j in i..n {
                    cols.push(x[i] * x[j]);
                    names.push(format!("d_{}{}", i + 1, j + 1));
                }
            }
            cols.push(y * y);
            names.push("e".to_string());
        }
        BoundaryKind::MixedDN => {
            let xn = x[n - 1];
            let r = xn.hypot(y);
            let w = w0s(s, xn, y);
            cols.push(w);
            names.push("a0".to_string());
            cols.push(w * (sv * r - xn));
            names.push("a1".to_string());
            cols.push(w.powf(1.0 + 1.0 / sv));
            names.push("e".to_string());
        }
    }
    (cols, names)
}

/// Fits the leading homogeneous expansion on each half ball `B_r^+`, `r` in `radii`.
pub fn fit_boundary_expansion(
    samples: &[Sample],
    kind: BoundaryKind,
    s: FracOrder,
    radii: &[f64],
) -> Result<BoundaryFit> {
    if samples.is_empty() || radii.is_empty() {
        return Err(Error::InsufficientSamples("no samples or radii".into()));
    }
    let names = template(kind, s, &samples[0].x).1;
    let p = names.len();
    let w_exp = s.weight_exp();
    let mut per_radius = Vec::new();
    let mut data_scale: f64 = 0.0;
    for &r in radii {
        let inside: Vec<&Sample> = samples
            .iter()
            .filter(|sm| sm.x.iter().map(|c| c * c).sum::<f64>() <= r * r)
            .collect();
        if inside.len() < 2 * p {
            return Err(Error::InsufficientSamples(format!(
                "{} samples in the half ball of radius {r}, need {}",
                inside.len(),
                2 * p
            )));
        }
        let rows: Vec<Vec<f64>> = inside.iter().map(|sm| template(kind, s, &sm.x).0).collect();
        let rhs: Vec<f64> = inside.iter().map(|sm| sm.value).collect();
        let weights: Vec<f64> = inside
            .iter()
            .map(|sm| sm.x[sm.x.len() - 1].powf(w_exp))
            .collect();
        let fit = weighted_lsq(&rows, &rhs, &weights)?;
        let wsum: f64 = weights.iter().sum();
        let data: f64 = rhs.iter().zip(&weights).map(|(v, w)| w * v * v).sum::<f64>() / wsum;
        data_scale = data_scale.max(data.sqrt());
        per_radius.push(RadiusFit {
            radius: r,
            coefficients: fit.coeffs,
            remainder: fit.residual / wsum.sqrt(),
        });
    }
    per_radius.sort_by(|a, b| b.radius.partial_cmp(&a.radius).unwrap());
    let floor = 1e-11 * data_scale.max(f64::MIN_POSITIVE);
    let decay_exponent = if per_radius.iter().all(|f| f.remainder <= floor) {
        None
    } else {
        let rs: Vec<f64> = per_radius.iter().map(|f| f.radius).collect();
        let rem: Vec<f64> = per_radius.iter().map(|f| f.remainder.max(floor)).collect();
        log_log_slope(&rs, &rem)
    };
    Ok(BoundaryFit {
        kind,
        names,
        coefficients: per_radius.last().unwrap().coefficients.clone(),
        per_radius,
        decay_exponent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Zero;
    use crate::closed_forms::{w1s, FracOrder};

    fn s(v: f64) -> FracOrder {
        FracOrder::new(v).unwrap()
    }

    #[test]
    fn coefficient_examples() {
        assert_eq!(hypergeom_coeffs(0, s(0.5)), vec![1.0]);
        let c1 = hypergeom_coeffs(1, s(0.5));
        assert!((c1[1] + 4.0 / 3.0).abs() < 1e-15);
        let c2 = hypergeom_coeffs(2, s(0.5));
        assert!((c2[1] + 4.0).abs() < 1e-15);
        assert!((c2[2] - 16.0 / 5.0).abs() < 1e-14);
    }

    #[test]
    fn exact_termination() {
        let half = BigRational::new(1.into(), 2.into());
        let (a, tail) = hypergeom_coeffs_exact(2, &half);
        assert_eq!(a[1], BigRational::from_integer((-4).into()));
        assert_eq!(a[2], BigRational::new(16.into(), 5.into()));
        assert!(tail.is_zero());
    }

    #[test]
    fn eigenvalue_homogeneity_relation() {
        for k in 0..6 {
            let sv = s(0.3);
            let kappa = k as f64 + 0.3;
            let lhs = kappa * kappa + (1.0 - 0.6) * kappa;
            assert!((lhs - eigenvalue(k, sv)).abs() < 1e-12);
        }
        assert!((eigenvalue(0, s(0.3)) - 0.21).abs() < 1e-15);
    }

    #[test]
    fn low_modes_match_closed_forms() {
        let sv = s(0.4);
        let m0 = HomogeneousMode::new(0, sv);
        let m1 = HomogeneousMode::new(1, sv);
        let mut ratio = None;
        for &(a, b) in &[(0.3, 0.2), (-0.5, 0.7), (1.2, 0.01), (-0.9, 0.05)] {
            let w = w0s(sv, a, b);
            assert!((m0.eval(a, b) - 2f64.powf(-0.4) * w).abs() < 1e-14);
            let q = m1.eval(a, b) / w1s(sv, a, b);
            let base = *ratio.get_or_insert(q);
            assert!((q - base).abs() < 1e-12 * base.abs());
        }
        assert_eq!(m1.eval(-1.0, 0.0), 0.0);
        assert_eq!(m1.eval(0.0, 0.0), 0.0);
    }

    #[test]
    fn oracle_half_order() {
        let ev = sl_eigen_oracle(s(0.5), 2000, 3).unwrap();
        for (k, v) in ev.iter().enumerate() {
            let exact = (k as f64 + 0.5).powi(2);
            assert!((v - exact).abs() / exact < 1e-3);
        }
    }

    #[test]
    fn oracle_rejects_bad_input() {
        assert!(sl_eigen_oracle(s(0.5), 50, 3).is_err());
        assert!(sl_eigen_oracle(s(0.5), 200, 11).is_err());
    }

    #[test]
    fn basis_examples() {
        let sv = s(0.3);
        for n in 1..=2 {
            let b = enumerate_homogeneous(BoundaryKind::Dirichlet, 0.6, n, sv).unwrap();
            assert_eq!(b.basis.len(), 1);
            let x = [0.2, 0.4, 0.7];
            let v = b.basis[0].eval(&x[3 - n - 1..]);
            assert!((v - 0.7f64.powf(0.6)).abs() < 1e-14);
            let b = enumerate_homogeneous(BoundaryKind::Neumann, 0.0, n, sv).unwrap();
            assert_eq!(b.basis.len(), 1);
            assert!((b.basis[0].eval(&x[3 - n - 1..]) - 1.0).abs() < 1e-15);
        }
        let b = enumerate_homogeneous(BoundaryKind::MixedDN, 0.3, 2, sv).unwrap();
        assert_eq!(b.basis.len(), 1);
        let v = b.basis[0].eval(&[0.5, -0.2, 0.3]);
        assert!((v - 2f64.powf(-0.3) * w0s(sv, -0.2, 0.3)).abs() < 1e-14);
        assert!(enumerate_homogeneous(BoundaryKind::MixedDN, 0.5, 2, sv)
            .unwrap()
            .basis
            .is_empty());
    }

    #[test]
    fn basis_elements_solve_the_equation() {
        let sv = s(0.35);
        for kind in [BoundaryKind::Dirichlet, BoundaryKind::Neumann, BoundaryKind::MixedDN] {
            for n in 1..=2 {
                for d in 0..5 {
                    let kappa = d as f64
                        + match kind {
                            BoundaryKind::Dirichlet => 0.7,
                            BoundaryKind::Neumann => 0.0,
                            BoundaryKind::MixedDN => 0.35,
                        };
                    let b = enumerate_homogeneous(kind, kappa, n, sv).unwrap();
                    assert!(!b.basis.is_empty());
                    for e in &b.basis {
                        assert!(e.max_residual < 1e-9, "{kind:?} n={n} kappa={kappa}: {}", e.max_residual);
                    }
                }
            }
        }
    }

    #[test]
    fn basis_sizes() {
        let sv = s(0.5);
        // n = 2: d = 2 monomials in x'' (one variable) -> one per m, m = 0..=2
        assert_eq!(enumerate_homogeneous(BoundaryKind::MixedDN, 2.5, 2, sv).unwrap().basis.len(), 3);
        assert_eq!(enumerate_homogeneous(BoundaryKind::MixedDN, 2.5, 1, sv).unwrap().basis.len(), 1);
        // degree-2 polynomials in two thin variables
        assert_eq!(enumerate_homogeneous(BoundaryKind::Neumann, 2.0, 2, sv).unwrap().basis.len(), 3);
    }

    #[test]
    fn template_fits() {
        let sv = s(0.4);
        let samples = half_ball_samples(1, 1.0, 40, |x| x[1].powf(0.8) * (2.0 + 3.0 * x[0]));
        let fit = fit_boundary_expansion(&samples, BoundaryKind::Dirichlet, sv, &[1.0, 0.5, 0.25]).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-10);
        assert!((fit.coefficients[1] - 3.0).abs() < 1e-10);
        assert!(fit.decay_exponent.is_none());

        let samples = half_ball_samples(1, 1.0, 40, |x| w1s(sv, x[0], x[1]));
        let fit = fit_boundary_expansion(&samples, BoundaryKind::MixedDN, sv, &[1.0, 0.5, 0.25]).unwrap();
        assert!(fit.coefficients[0].abs() < 1e-10);
        assert!((fit.coefficients[1] - 1.0 / (0.16 - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn orthogonal_mode_decay() {
        let sv = s(0.4);
        let m2 = HomogeneousMode::new(2, sv);
        let samples = half_ball_samples(1, 1.0, 160, |x| w0s(sv, x[0], x[1]) + 0.1 * m2.eval(x[0], x[1]));
        let radii = [1.0, 0.5, 0.25, 0.125];
        let fit = fit_boundary_expansion(&samples, BoundaryKind::MixedDN, sv, &radii).unwrap();
        let slope = fit.decay_exponent.unwrap();
        assert!((slope - 2.4).abs() < 0.15, "slope {slope}");
    }
}
