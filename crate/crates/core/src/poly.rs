//! Sparse multivariate polynomials stored as monomial dictionaries.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::jet::Jet;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Polynomial {
    pub nvars: usize,
    /// Exponent vector -> coefficient. Zero coefficients are never stored.
    pub terms: BTreeMap<Vec<u32>, f64>,
}

/// All exponent vectors in `nvars` variables with total degree `d`, in lexicographic order.
pub fn monomials_of_degree(nvars: usize, d: u32) -> Vec<Vec<u32>> {
    if nvars == 0 {
        return if d == 0 { vec![Vec::new()] } else { Vec::new() };
    }
    let mut out = Vec::new();
    for first in (0..=d).rev() {
        for mut rest in monomials_of_degree(nvars - 1, d - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn monomial(exps: Vec<u32>, coef: f64) -> Self {
        let mut p = Self::zero(exps.len());
        p.add_term(exps, coef);
        p
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        Self::monomial(vec![0; nvars], c)
    }

    pub fn add_term(&mut self, exps: Vec<u32>, coef: f64) {
        debug_assert_eq!(exps.len(), self.nvars);
        let e = self.terms.entry(exps).or_insert(0.0);
        *e += coef;
        if *e == 0.0 {
            self.terms.retain(|_, c| *c != 0.0);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut p = Self::zero(self.nvars);
        if c != 0.0 {
            for (e, v) in &self.terms {
                p.terms.insert(e.clone(), v * c);
            }
        }
        p
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut p = self.clone();
        for (e, v) in &other.terms {
            p.add_term(e.clone(), *v);
        }
        p
    }

    /// Total degree if all monomials share it.
    pub fn homogeneous_degree(&self) -> Option<u32> {
        let mut degs = self.terms.keys().map(|e| e.iter().sum::<u32>());
        let first = degs.next()?;
        degs.all(|d| d == first).then_some(first)
    }

    /// Euclidean Laplacian in all variables.
    pub fn laplacian(&self) -> Self {
        let mut p = Self::zero(self.nvars);
        for (e, v) in &self.terms {
            for i in 0..self.nvars {
                if e[i] >= 2 {
                    let mut f = e.clone();
                    f[i] -= 2;
                    p.add_term(f, v * (e[i] * (e[i] - 1)) as f64);
                }
            }
        }
        p
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, v)| {
                v * e
                    .iter()
                    .zip(x)
                    .map(|(&k, &xi)| xi.powi(k as i32))
                    .product::<f64>()
            })
            .sum()
    }

    pub fn jet<const D: usize>(&self, x: &[Jet<D>]) -> Jet<D> {
        let mut acc = Jet::constant(0.0);
        for (e, v) in &self.terms {
            let mut t = Jet::constant(*v);
            for (&k, xi) in e.iter().zip(x) {
                if k > 0 {
                    t = t * xi.powi(k as i32);
                }
            }
            acc = acc + t;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_counts() {
        assert_eq!(monomials_of_degree(0, 0).len(), 1);
        assert_eq!(monomials_of_degree(0, 2).len(), 0);
        assert_eq!(monomials_of_degree(1, 4).len(), 1);
        assert_eq!(monomials_of_degree(2, 3).len(), 4);
        assert_eq!(monomials_of_degree(3, 2).len(), 6);
    }

    #[test]
    fn laplacian_and_eval() {
        // x^2 y - y^3 / 3 is harmonic
        let mut p = Polynomial::monomial(vec![2, 1], 1.0);
        p.add_term(vec![0, 3], -1.0 / 3.0);
        assert!(p.laplacian().is_zero());
        assert!((p.eval(&[2.0, 3.0]) - (12.0 - 9.0)).abs() < 1e-14);
        assert_eq!(p.homogeneous_degree(), Some(3));
        let x = Jet::<2>::vars([2.0, 3.0]);
        let j = p.jet(&x);
        assert!((j.g[0] - 12.0).abs() < 1e-14);
        assert!(j.laplacian().abs() < 1e-13);
    }
}
