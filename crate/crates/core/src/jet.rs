//! Second-order forward-mode jets.
//!
//! A [`Jet`] carries a value together with its exact gradient and Hessian with
//! respect to `D` independent variables. Arithmetic propagates all three by the
//! chain and product rules, so composite closed-form fields get analytic second
//! derivatives without finite differencing.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet<const D: usize> {
    pub v: f64,
    pub g: [f64; D],
    pub h: [[f64; D]; D],
}

impl<const D: usize> Jet<D> {
    pub fn constant(v: f64) -> Self {
        Jet {
            v,
            g: [0.0; D],
            h: [[0.0; D]; D],
        }
    }

    /// The `i`-th coordinate function evaluated at `v`.
    pub fn var(i: usize, v: f64) -> Self {
        let mut j = Self::constant(v);
        j.g[i] = 1.0;
        j
    }

    /// Independent variables at the point `x`.
    pub fn vars(x: [f64; D]) -> [Self; D] {
        let mut out = [Self::constant(0.0); D];
        for i in 0..D {
            out[i] = Self::var(i, x[i]);
        }
        out
    }

    /// Applies a scalar function given its value and first two derivatives at `self.v`.
    pub fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        let mut out = Self::constant(f0);
        for i in 0..D {
            out.g[i] = f1 * self.g[i];
            for k in 0..D {
                out.h[i][k] = f1 * self.h[i][k] + f2 * self.g[i] * self.g[k];
            }
        }
        out
    }

    pub fn powf(self, p: f64) -> Self {
        let x = self.v;
        if p == 0.0 {
            return Self::constant(1.0);
        }
        if p == 1.0 {
            return self;
        }
        if p == 2.0 {
            return self * self;
        }
        let f0 = x.powf(p);
        let f1 = p * x.powf(p - 1.0);
        let f2 = p * (p - 1.0) * x.powf(p - 2.0);
        self.chain(f0, f1, f2)
    }

    pub fn powi(self, n: i32) -> Self {
        match n {
            0 => Self::constant(1.0),
            1 => self,
            _ => {
                let x = self.v;
                let nf = n as f64;
                self.chain(
                    x.powi(n),
                    nf * x.powi(n - 1),
                    nf * (nf - 1.0) * x.powi(n - 2),
                )
            }
        }
    }

    pub fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        self.chain(r, 0.5 / r, -0.25 / (r * self.v))
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn ln(self) -> Self {
        let x = self.v;
        self.chain(x.ln(), 1.0 / x, -1.0 / (x * x))
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn recip(self) -> Self {
        let x = self.v;
        self.chain(1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x))
    }

    pub fn scale(self, c: f64) -> Self {
        let mut out = self;
        out.v *= c;
        for i in 0..D {
            out.g[i] *= c;
            for k in 0..D {
                out.h[i][k] *= c;
            }
        }
        out
    }

    pub fn laplacian(&self) -> f64 {
        (0..D).map(|i| self.h[i][i]).sum()
    }
}

impl<const D: usize> Add for Jet<D> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut out = self;
        out.v += o.v;
        for i in 0..D {
            out.g[i] += o.g[i];
            for k in 0..D {
                out.h[i][k] += o.h[i][k];
            }
        }
        out
    }
}

impl<const D: usize> Sub for Jet<D> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl<const D: usize> Neg for Jet<D> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl<const D: usize> Mul for Jet<D> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut out = Self::constant(self.v * o.v);
        for i in 0..D {
            out.g[i] = self.g[i] * o.v + self.v * o.g[i];
            for k in 0..D {
                out.h[i][k] = self.h[i][k] * o.v
                    + self.v * o.h[i][k]
                    + self.g[i] * o.g[k]
                    + self.g[k] * o.g[i];
            }
        }
        out
    }
}

impl<const D: usize> Div for Jet<D> {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl<const D: usize> Add<f64> for Jet<D> {
    type Output = Self;
    fn add(self, c: f64) -> Self {
        let mut out = self;
        out.v += c;
        out
    }
}

impl<const D: usize> Sub<f64> for Jet<D> {
    type Output = Self;
    fn sub(self, c: f64) -> Self {
        self + (-c)
    }
}

impl<const D: usize> Mul<f64> for Jet<D> {
    type Output = Self;
    fn mul(self, c: f64) -> Self {
        self.scale(c)
    }
}

impl<const D: usize> Add<Jet<D>> for f64 {
    type Output = Jet<D>;
    fn add(self, j: Jet<D>) -> Jet<D> {
        j + self
    }
}

impl<const D: usize> Sub<Jet<D>> for f64 {
    type Output = Jet<D>;
    fn sub(self, j: Jet<D>) -> Jet<D> {
        (-j) + self
    }
}

impl<const D: usize> Mul<Jet<D>> for f64 {
    type Output = Jet<D>;
    fn mul(self, j: Jet<D>) -> Jet<D> {
        j.scale(self)
    }
}

/// Jet of `f` at `x` from fourth-order centred differences with step `h`.
pub fn fd_jet<const D: usize>(f: impl Fn([f64; D]) -> f64, x: [f64; D], h: f64) -> Jet<D> {
    stencil_jet(
        |o| {
            let mut y = x;
            for i in 0..D {
                y[i] += o[i] as f64 * h;
            }
            f(y)
        },
        [h; D],
    )
}

/// Fourth-order centred-difference jet from values at integer offsets
/// `o in {-2..2}^D` of a lattice with per-axis spacing `steps`.
pub fn stencil_jet<const D: usize>(f: impl Fn([i32; D]) -> f64, steps: [f64; D]) -> Jet<D> {
    let at = |offs: &[(usize, i32)]| {
        let mut o = [0; D];
        for &(i, d) in offs {
            o[i] += d;
        }
        f(o)
    };
    let f0 = f([0; D]);
    let mut out = Jet::constant(f0);
    let w = [(1, 8.0), (-1, -8.0), (2, -1.0), (-2, 1.0)];
    for i in 0..D {
        let hi = steps[i];
        let (p1, m1) = (at(&[(i, 1)]), at(&[(i, -1)]));
        let (p2, m2) = (at(&[(i, 2)]), at(&[(i, -2)]));
        out.g[i] = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * hi);
        out.h[i][i] = (16.0 * (p1 + m1) - (p2 + m2) - 30.0 * f0) / (12.0 * hi * hi);
        for k in 0..i {
            let mut acc = 0.0;
            for &(di, ci) in &w {
                for &(dk, ck) in &w {
                    acc += ci * ck * at(&[(i, di), (k, dk)]);
                }
            }
            let v = acc / (144.0 * hi * steps[k]);
            out.h[i][k] = v;
            out.h[k][i] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_quotient_rules() {
        let [x, y] = Jet::<2>::vars([1.3, -0.7]);
        let f = x * x * y / (x + 2.0);
        // f = x^2 y / (x+2)
        let (xv, yv) = (1.3_f64, -0.7_f64);
        let q = xv + 2.0;
        assert!((f.v - xv * xv * yv / q).abs() < 1e-15);
        let fx = yv * (xv * xv + 4.0 * xv) / (q * q);
        let fy = xv * xv / q;
        let fxx = yv * 8.0 / (q * q * q);
        let fxy = (xv * xv + 4.0 * xv) / (q * q);
        assert!((f.g[0] - fx).abs() < 1e-14);
        assert!((f.g[1] - fy).abs() < 1e-14);
        assert!((f.h[0][0] - fxx).abs() < 1e-14);
        assert!((f.h[0][1] - fxy).abs() < 1e-14);
        assert!((f.h[1][0] - fxy).abs() < 1e-14);
        assert!(f.h[1][1].abs() < 1e-15);
    }

    #[test]
    fn finite_difference_jet() {
        let f = |x: [f64; 2]| (x[0] * 1.3).sin() * x[1].exp();
        let [a, b] = Jet::<2>::vars([0.4, -0.2]);
        let exact = (a * 1.3).sin() * b.exp();
        let fd = fd_jet(f, [0.4, -0.2], 1e-2);
        assert!((fd.v - exact.v).abs() < 1e-15);
        for i in 0..2 {
            assert!((fd.g[i] - exact.g[i]).abs() < 1e-8);
            for k in 0..2 {
                assert!((fd.h[i][k] - exact.h[i][k]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn elementary_functions() {
        let [x] = Jet::<1>::vars([0.4]);
        let e = x.exp().sin();
        let u = 0.4_f64.exp();
        assert!((e.g[0] - u.cos() * u).abs() < 1e-14);
        assert!((e.h[0][0] - (u.cos() * u - u.sin() * u * u)).abs() < 1e-14);
        let p = x.powf(2.5);
        assert!((p.h[0][0] - 2.5 * 1.5 * 0.4_f64.powf(0.5)).abs() < 1e-14);
        let r = x.sqrt();
        assert!((r.h[0][0] + 0.25 * 0.4_f64.powf(-1.5)).abs() < 1e-13);
    }
}
