//! Small dense weighted least-squares helper shared by the fitting routines.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub struct LsqFit {
    pub coeffs: Vec<f64>,
    /// Weighted residual `sqrt(sum w_i (row_i . c - b_i)^2)`.
    pub residual: f64,
}

/// Minimizes `sum_i w_i (row_i . c - b_i)^2` via SVD of the column-scaled system.
pub fn weighted_lsq(rows: &[Vec<f64>], rhs: &[f64], weights: &[f64]) -> Result<LsqFit> {
    let m = rows.len();
    let p = rows.first().map_or(0, |r| r.len());
    if m < p || p == 0 {
        return Err(Error::InsufficientSamples(format!(
            "{m} equations for {p} unknowns"
        )));
    }
    let mut a = DMatrix::<f64>::zeros(m, p);
    let mut b = DVector::<f64>::zeros(m);
    for i in 0..m {
        let sw = weights[i].sqrt();
        for j in 0..p {
            a[(i, j)] = sw * rows[i][j];
        }
        b[i] = sw * rhs[i];
    }
    let mut scale = vec![1.0; p];
    for j in 0..p {
        let n = a.column(j).norm();
        if n > 0.0 {
            scale[j] = n;
            a.column_mut(j).scale_mut(1.0 / n);
        }
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin < 1e-12 * smax {
        return Err(Error::DegenerateFit(format!(
            "condition estimate {:.3e}",
            smax / smin.max(f64::MIN_POSITIVE)
        )));
    }
    let x = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::DegenerateFit(e.to_string()))?;
    let residual = (&a * &x - &b).norm();
    let coeffs = (0..p).map(|j| x[j] / scale[j]).collect();
    Ok(LsqFit { coeffs, residual })
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
