//! Closed-form model solutions with hand-derived derivatives.
//!
//! Conventions: the upper half space is `{x_{n+1} >= 0}`, `x = (x'', x_n, x_{n+1})`,
//! and `L_s u = div(x_{n+1}^{1-2s} grad u)`. The two-dimensional profiles depend on
//! `(x_n, x_{n+1})` only; `r = sqrt(x_n^2 + x_{n+1}^2)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::spectral::HomogeneousMode;

/// Constant in `d_n w_{1,s} = C_S * w_{0,s}`.
pub const C_S: f64 = 1.0;

/// Scaling of the model Legendre function:
/// `v_model = C_STAR * (-(s/(s+1)) y_n^{2s+2} + y_n^{2s} y_{n+1}^2)`.
pub const C_STAR: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize)]
pub struct FracOrder(f64);

impl FracOrder {
    pub fn new(s: f64) -> Result<Self> {
        if s.is_finite() && s > 0.0 && s < 1.0 {
            Ok(FracOrder(s))
        } else {
            Err(Error::InvalidOrder(s))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// Exponent `1 - 2s` of the weight.
    pub fn weight_exp(self) -> f64 {
        1.0 - 2.0 * self.0
    }
}

/// Point of the closed upper half space.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HalfPoint {
    pub x_tan: Vec<f64>,
    pub x_n: f64,
    pub x_np1: f64,
}

impl HalfPoint {
    pub fn new(x_tan: Vec<f64>, x_n: f64, x_np1: f64) -> Result<Self> {
        if !(x_np1 >= 0.0) || !x_n.is_finite() || !x_np1.is_finite() {
            return Err(Error::InvalidPoint(format!(
                "x_n = {x_n}, x_(n+1) = {x_np1}; need finite values and x_(n+1) >= 0"
            )));
        }
        if x_tan.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPoint("non-finite tangential coordinate".into()));
        }
        Ok(HalfPoint { x_tan, x_n, x_np1 })
    }

    /// Point with no `x''` coordinates (thin space of dimension one).
    pub fn planar(x_n: f64, x_np1: f64) -> Result<Self> {
        Self::new(Vec::new(), x_n, x_np1)
    }

    /// Thin-space coordinates `x' = (x'', x_n)`.
    pub fn thin(&self) -> Vec<f64> {
        let mut v = self.x_tan.clone();
        v.push(self.x_n);
        v
    }

    pub fn dim(&self) -> usize {
        self.x_tan.len() + 1
    }
}

/// `r + x_n`, computed as `x_{n+1}^2 / (r - x_n)` when `x_n < 0`.
pub fn r_plus_xn(x_n: f64, x_np1: f64) -> f64 {
    let r = x_n.hypot(x_np1);
    if x_n >= 0.0 {
        r + x_n
    } else if r == 0.0 {
        0.0
    } else {
        x_np1 * x_np1 / (r - x_n)
    }
}

/// `r - x_n`, computed stably when `x_n > 0`.
pub fn r_minus_xn(x_n: f64, x_np1: f64) -> f64 {
    r_plus_xn(-x_n, x_np1)
}

/// `w_{0,s}(x_n, x_{n+1}) = (r + x_n)^s`.
pub fn w0s(s: FracOrder, x_n: f64, x_np1: f64) -> f64 {
    r_plus_xn(x_n, x_np1).powf(s.get())
}

pub fn eval_w0s(s: FracOrder, p: &HalfPoint) -> f64 {
    w0s(s, p.x_n, p.x_np1)
}

/// Value, gradient and Hessian of `w_{0,s}` in `(x_n, x_{n+1})`.
/// Undefined at the origin and on the contact ray.
pub fn w0s_derivs(s: FracOrder, x_n: f64, x_np1: f64) -> Jet<2> {
    let s = s.get();
    let r = x_n.hypot(x_np1);
    let a = r_plus_xn(x_n, x_np1);
    let w = a.powf(s);
    let y = x_np1;
    let r2 = r * r;
    let r3 = r2 * r;
    let d_n = s * w / r;
    let d_y = s * a.powf(s - 1.0) * y / r;
    let d_nn = s * w * (s / r2 - x_n / r3);
    let d_ny = s * y * (s * a.powf(s - 1.0) / r2 - w / r3);
    let d_yy = s
        * ((s - 1.0) * a.powf(s - 2.0) * y * y / r2 + a.powf(s - 1.0) / r
            - a.powf(s - 1.0) * y * y / r3);
    Jet {
        v: w,
        g: [d_n, d_y],
        h: [[d_nn, d_ny], [d_ny, d_yy]],
    }
}

/// `w_{1,s} = (r + x_n)^s (s r - x_n) / (s^2 - 1)`.
pub fn w1s(s: FracOrder, x_n: f64, x_np1: f64) -> f64 {
    let sv = s.get();
    let r = x_n.hypot(x_np1);
    r_plus_xn(x_n, x_np1).powf(sv) * (sv * r - x_n) / (sv * sv - 1.0)
}

pub fn eval_w1s(s: FracOrder, p: &HalfPoint) -> f64 {
    w1s(s, p.x_n, p.x_np1)
}

/// `x_{n+1}^{1-2s} d_{n+1} w_{1,s} = C_S (s/(s-1)) (r - x_n)^{1-s}`.
///
/// The right-hand side is continuous up to the thin space, so this also
/// returns the thin flux on the contact ray.
pub fn weighted_normal_w1s(s: FracOrder, x_n: f64, x_np1: f64) -> f64 {
    let sv = s.get();
    C_S * sv / (sv - 1.0) * r_minus_xn(x_n, x_np1).powf(1.0 - sv)
}

/// Analytic `(d_n w_{1,s}, x_{n+1}^{1-2s} d_{n+1} w_{1,s})`.
pub fn grad_w1s(s: FracOrder, p: &HalfPoint) -> Result<(f64, f64)> {
    if p.x_np1 == 0.0 && p.x_n <= 0.0 {
        return Err(Error::DegeneratePoint(p.x_n));
    }
    Ok((
        C_S * w0s(s, p.x_n, p.x_np1),
        weighted_normal_w1s(s, p.x_n, p.x_np1),
    ))
}

/// Value, gradient and Hessian of `w_{1,s}` in `(x_n, x_{n+1})`, off the thin space.
pub fn w1s_derivs(s: FracOrder, x_n: f64, x_np1: f64) -> Jet<2> {
    let sv = s.get();
    let y = x_np1;
    let r = x_n.hypot(y);
    let rm = r_minus_xn(x_n, y);
    let d0 = w0s_derivs(s, x_n, y);
    let k = sv / (sv - 1.0);
    let d_y = k * y.powf(2.0 * sv - 1.0) * rm.powf(1.0 - sv);
    let d_yy = k
        * ((2.0 * sv - 1.0) * y.powf(2.0 * sv - 2.0) * rm.powf(1.0 - sv)
            + y.powf(2.0 * sv - 1.0) * (1.0 - sv) * rm.powf(-sv) * y / r);
    Jet {
        v: w1s(s, x_n, y),
        g: [d0.v, d_y],
        h: [[d0.g[0], d0.g[1]], [d0.g[1], d_yy]],
    }
}

/// `(r + x_n)` as a jet, using the stable branch away from the positive axis.
pub fn r_plus_xn_jet<const D: usize>(x_n: Jet<D>, x_np1: Jet<D>) -> Jet<D> {
    let r = (x_n * x_n + x_np1 * x_np1).sqrt();
    if x_n.v >= 0.0 {
        r + x_n
    } else {
        x_np1 * x_np1 / (r - x_n)
    }
}

pub fn w0s_jet<const D: usize>(s: FracOrder, x_n: Jet<D>, x_np1: Jet<D>) -> Jet<D> {
    r_plus_xn_jet(x_n, x_np1).powf(s.get())
}

pub fn w1s_jet<const D: usize>(s: FracOrder, x_n: Jet<D>, x_np1: Jet<D>) -> Jet<D> {
    let sv = s.get();
    let r = (x_n * x_n + x_np1 * x_np1).sqrt();
    w0s_jet(s, x_n, x_np1) * (r * sv - x_n) * (1.0 / (sv * sv - 1.0))
}

/// `L_s u / x_{n+1}^{1-2s} = Lap u + (1-2s) d_{n+1} u / x_{n+1}`, the last
/// jet coordinate being `x_{n+1}`.
pub fn reduced_l_s<const D: usize>(s: FracOrder, u: &Jet<D>, x_np1: f64) -> f64 {
    u.laplacian() + s.weight_exp() * u.g[D - 1] / x_np1
}

/// `L_s u` at a point with height `x_np1 > 0`.
pub fn apply_l_s<const D: usize>(s: FracOrder, u: &Jet<D>, x_np1: f64) -> f64 {
    x_np1.powf(s.weight_exp()) * reduced_l_s(s, u, x_np1)
}

/// Model Legendre function `C_STAR (-(s/(s+1)) y_n^{2s+2} + y_n^{2s} y_{n+1}^2)`.
pub fn eval_v_model(s: FracOrder, y_n: f64, y_np1: f64) -> f64 {
    let sv = s.get();
    let p = y_n.powf(2.0 * sv);
    C_STAR * p * (-(sv / (sv + 1.0)) * y_n * y_n + y_np1 * y_np1)
}

/// Value, gradient and Hessian of the model Legendre function in `(y_n, y_{n+1})`.
pub fn v_model_derivs(s: FracOrder, y_n: f64, y_np1: f64) -> Jet<2> {
    let sv = s.get();
    let (a, b) = (y_n, y_np1);
    let c = C_STAR;
    let a2s = a.powf(2.0 * sv);
    let a2s1 = a.powf(2.0 * sv - 1.0);
    let a2s2 = a.powf(2.0 * sv - 2.0);
    Jet {
        v: eval_v_model(s, a, b),
        g: [
            c * (-2.0 * sv * a2s * a + 2.0 * sv * a2s1 * b * b),
            2.0 * c * a2s * b,
        ],
        h: [
            [
                c * (-2.0 * sv * (2.0 * sv + 1.0) * a2s
                    + 2.0 * sv * (2.0 * sv - 1.0) * a2s2 * b * b),
                4.0 * sv * c * a2s1 * b,
            ],
            [4.0 * sv * c * a2s1 * b, 2.0 * c * a2s],
        ],
    }
}

pub fn v_model_jet<const D: usize>(s: FracOrder, y_n: Jet<D>, y_np1: Jet<D>) -> Jet<D> {
    let sv = s.get();
    let p = y_n.powf(2.0 * sv);
    p * (y_n * y_n * (-(sv / (sv + 1.0))) + y_np1 * y_np1) * C_STAR
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum FieldKind {
    W0s,
    W1s,
    /// `w_{0,s}^{1+tau}` with the given `tau`.
    W0sPower(f64),
    VModel,
    Eigenmode(usize),
}

/// A closed-form profile composed with an optional thin-space shift and normal.
///
/// The field evaluates `profile((x' - x0) . nu, x_{n+1})`; without a shift it is
/// `profile(x_n, x_{n+1})`.
#[derive(Clone, Debug, Serialize)]
pub struct ClosedFormField {
    pub kind: FieldKind,
    pub s: FracOrder,
    pub frame: Option<(Vec<f64>, Vec<f64>)>,
    #[serde(skip)]
    mode: Option<HomogeneousMode>,
}

impl ClosedFormField {
    pub fn new(kind: FieldKind, s: FracOrder) -> Self {
        let mode = match kind {
            FieldKind::Eigenmode(k) => Some(HomogeneousMode::new(k, s)),
            _ => None,
        };
        ClosedFormField {
            kind,
            s,
            frame: None,
            mode,
        }
    }

    /// Attaches a shift `x0` on the thin space and a unit normal `nu` with `nu_n > 0`.
    pub fn with_frame(mut self, x0: Vec<f64>, nu: Vec<f64>) -> Result<Self> {
        if x0.len() != nu.len() || nu.is_empty() {
            return Err(Error::InvalidInput("shift and normal lengths differ".into()));
        }
        let norm = nu.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("normal has length {norm}")));
        }
        if *nu.last().unwrap() <= 0.0 {
            return Err(Error::InvalidInput("normal must satisfy e_n . nu > 0".into()));
        }
        self.frame = Some((x0, nu));
        self
            .validate()
            .map(|_| self)
    }

    fn validate(&self) -> Result<()> {
        if let FieldKind::W0sPower(tau) = self.kind {
            if !(tau > 0.0) {
                return Err(Error::InvalidInput(format!("power exponent tau = {tau}")));
            }
        }
        Ok(())
    }

    fn normal_coordinate(&self, thin: &[f64]) -> f64 {
        match &self.frame {
            None => *thin.last().unwrap(),
            Some((x0, nu)) => thin
                .iter()
                .zip(x0)
                .zip(nu)
                .map(|((x, c), n)| (x - c) * n)
                .sum(),
        }
    }

    fn profile(&self, q: f64, y: f64) -> f64 {
        match self.kind {
            FieldKind::W0s => w0s(self.s, q, y),
            FieldKind::W1s => w1s(self.s, q, y),
            FieldKind::W0sPower(tau) => w0s(self.s, q, y).powf(1.0 + tau),
            FieldKind::VModel => eval_v_model(self.s, q.max(0.0), y),
            FieldKind::Eigenmode(_) => self.mode.as_ref().unwrap().eval(q, y),
        }
    }

    fn profile_jet<const D: usize>(&self, q: Jet<D>, y: Jet<D>) -> Jet<D> {
        match self.kind {
            FieldKind::W0s => w0s_jet(self.s, q, y),
            FieldKind::W1s => w1s_jet(self.s, q, y),
            FieldKind::W0sPower(tau) => w0s_jet(self.s, q, y).powf(1.0 + tau),
            FieldKind::VModel => v_model_jet(self.s, q, y),
            FieldKind::Eigenmode(_) => self.mode.as_ref().unwrap().jet(q, y),
        }
    }

    pub fn value(&self, p: &HalfPoint) -> f64 {
        self.profile(self.normal_coordinate(&p.thin()), p.x_np1)
    }

    /// Value, gradient and Hessian in all `n+1` coordinates, `D = n + 1`.
    pub fn jet<const D: usize>(&self, x: [f64; D]) -> Jet<D> {
        let v = Jet::<D>::vars(x);
        let q = match &self.frame {
            None => v[D - 2],
            Some((x0, nu)) => {
                let mut q = Jet::constant(0.0);
                for i in 0..D - 1 {
                    q = q + (v[i] - x0[i]) * nu[i];
                }
                q
            }
        };
        self.profile_jet(q, v[D - 1])
    }
}

/// A scalar field on the closed upper half space with a bounded domain of definition.
pub trait HalfSpaceField {
    fn value(&self, p: &HalfPoint) -> f64;

    /// Radius of the half ball about the origin on which the field is defined.
    fn domain_radius(&self) -> f64 {
        f64::INFINITY
    }
}

impl HalfSpaceField for ClosedFormField {
    fn value(&self, p: &HalfPoint) -> f64 {
        ClosedFormField::value(self, p)
    }
}

/// `x -> c * w(x0 + lambda x)`.
pub struct Rescaled<'a, F: HalfSpaceField + ?Sized> {
    inner: &'a F,
    pub c: f64,
    pub lambda: f64,
    pub x0: Vec<f64>,
    radius: f64,
}

/// Rescales `w` about the thin point `x0`; `eval_radius` is the radius of the half
/// ball on which the rescaled field will be evaluated.
pub fn rescale_solution<'a, F: HalfSpaceField + ?Sized>(
    w: &'a F,
    c: f64,
    lambda: f64,
    x0: Vec<f64>,
    eval_radius: f64,
) -> Result<Rescaled<'a, F>> {
    if !(c > 0.0 && lambda > 0.0) {
        return Err(Error::InvalidInput(format!("c = {c}, lambda = {lambda}")));
    }
    let base = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let needed = base + lambda * eval_radius;
    if needed > w.domain_radius() {
        return Err(Error::OutOfDomain {
            needed,
            available: w.domain_radius(),
        });
    }
    Ok(Rescaled {
        inner: w,
        c,
        lambda,
        x0,
        radius: eval_radius,
    })
}

impl<F: HalfSpaceField + ?Sized> Rescaled<'_, F> {
    fn map(&self, p: &HalfPoint) -> HalfPoint {
        let mut thin = p.thin();
        for (t, c) in thin.iter_mut().zip(&self.x0) {
            *t = c + self.lambda * *t;
        }
        let x_n = thin.pop().unwrap();
        HalfPoint {
            x_tan: thin,
            x_n,
            x_np1: self.lambda * p.x_np1,
        }
    }

    /// Inhomogeneity of the rescaled problem: `c lambda^2 f(x0 + lambda x)`.
    pub fn inhomogeneity<'f>(
        &'f self,
        f: &'f dyn Fn(&HalfPoint) -> f64,
    ) -> impl Fn(&HalfPoint) -> f64 + 'f {
        move |p| self.c * self.lambda * self.lambda * f(&self.map(p))
    }
}

impl<F: HalfSpaceField + ?Sized> HalfSpaceField for Rescaled<'_, F> {
    fn value(&self, p: &HalfPoint) -> f64 {
        self.c * self.inner.value(&self.map(p))
    }

    fn domain_radius(&self) -> f64 {
        self.radius
    }
}

/// Inhomogeneity `f~` together with the thin-space Taylor data needed to remove
/// its leading normal behaviour.
pub trait Inhomogeneity {
    fn value(&self, p: &HalfPoint) -> f64;
    /// `d_{n+1} f~(x', 0)`.
    fn normal_derivative(&self, _thin: &[f64]) -> Option<f64> {
        None
    }
    /// `d_{n+1}^2 f~(x', 0)`, used for the limit of the quotient at the thin space.
    fn second_normal_derivative(&self, _thin: &[f64]) -> Option<f64> {
        None
    }
    /// `Lap' f~(x', 0)`.
    fn tangential_laplacian(&self, _thin: &[f64]) -> Option<f64> {
        None
    }
    /// `Lap' d_{n+1} f~(x', 0)`.
    fn tangential_laplacian_normal(&self, _thin: &[f64]) -> Option<f64> {
        None
    }
}

/// `f~(x) = sum_k coeffs[k] x_{n+1}^k`, independent of `x'`.
#[derive(Clone, Debug)]
pub struct NormalPolynomial {
    pub coeffs: Vec<f64>,
}

impl Inhomogeneity for NormalPolynomial {
    fn value(&self, p: &HalfPoint) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * p.x_np1 + c)
    }
    fn normal_derivative(&self, _: &[f64]) -> Option<f64> {
        Some(self.coeffs.get(1).copied().unwrap_or(0.0))
    }
    fn second_normal_derivative(&self, _: &[f64]) -> Option<f64> {
        Some(2.0 * self.coeffs.get(2).copied().unwrap_or(0.0))
    }
    fn tangential_laplacian(&self, _: &[f64]) -> Option<f64> {
        Some(0.0)
    }
    fn tangential_laplacian_normal(&self, _: &[f64]) -> Option<f64> {
        Some(0.0)
    }
}

/// Returns `(offset, f)` such that `w~ - offset` solves the Signorini problem
/// with right-hand side `x_{n+1}^{3-2s} f` when `w~` solves it with `x_{n+1}^{1-2s} f~`.
pub fn reduce_inhomogeneity(
    s: FracOrder,
    f_tilde: &dyn Inhomogeneity,
    p: &HalfPoint,
) -> Result<(f64, f64)> {
    let sv = s.get();
    let thin = p.thin();
    let base = HalfPoint {
        x_tan: p.x_tan.clone(),
        x_n: p.x_n,
        x_np1: 0.0,
    };
    let f0 = f_tilde.value(&base);
    let f1 = f_tilde
        .normal_derivative(&thin)
        .ok_or(Error::MissingDerivative("normal derivative"))?;
    let lap0 = f_tilde
        .tangential_laplacian(&thin)
        .ok_or(Error::MissingDerivative("tangential Laplacian"))?;
    let lap1 = f_tilde
        .tangential_laplacian_normal(&thin)
        .ok_or(Error::MissingDerivative("tangential Laplacian of the normal derivative"))?;
    let x = p.x_np1;
    let k2 = 2.0 * (2.0 - 2.0 * sv);
    let k3 = 3.0 * (3.0 - 2.0 * sv);
    let offset = f0 * x * x / k2 + f1 * x * x * x / k3;
    let quotient = if x > 1e-4 {
        (f_tilde.value(p) - f0 - f1 * x) / (x * x)
    } else {
        let f2 = f_tilde
            .second_normal_derivative(&thin)
            .ok_or(Error::MissingDerivative("second normal derivative"))?;
        0.5 * f2
    };
    Ok((offset, quotient - lap0 / k2 - lap1 * x / k3))
}
