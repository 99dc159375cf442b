//! Finite-volume discretization of the thin obstacle problem
//!
//! ```text
//! div(x_{n+1}^{1-2s} grad w) = x_{n+1}^{3-2s} f   in the half box,
//! w >= phi,  x_{n+1}^{1-2s} d_{n+1} w <= 0,  (w - phi) * flux = 0   on the thin space,
//! ```
//!
//! with Dirichlet data on the rest of the boundary, solved by red-black
//! projected SOR.
//!
//! Every node owns the control volume `[x - h/2, x + h/2]` clipped to the box.
//! Couplings across faces normal to a thin axis use the exact integral of the
//! weight over the face; couplings across faces normal to `x_{n+1}` use the
//! harmonic mean `h^n / int t^{2s-1} dt` between the two nodes. Both are exact
//! for the one-dimensional profiles `1` and `x_{n+1}^{2s}` and stay finite for
//! every `s` in `(0,1)`, so the matrix is a symmetric M-matrix.

use std::sync::Arc;

use serde::Serialize;

use crate::closed_forms::FracOrder;
use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Uniform grid on `[-half_width, half_width]^n x [0, height]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightedGrid {
    pub n: usize,
    pub half_width: f64,
    pub height: f64,
    pub h: f64,
    pub s: FracOrder,
    /// Node counts per axis; the last axis is `x_{n+1}`.
    pub dims: Vec<usize>,
}

impl WeightedGrid {
    pub fn new(n: usize, half_width: f64, height: f64, h: f64, s: FracOrder) -> Result<Self> {
        if !(1..=2).contains(&n) {
            return Err(Error::InvalidInput(format!("thin dimension n = {n} not in 1..=2")));
        }
        if !(h > 0.0 && half_width > 0.0 && height > 0.0) {
            return Err(Error::InvalidInput("non-positive grid extent or spacing".into()));
        }
        let count = |len: f64| -> Result<usize> {
            let c = len / h;
            if (c - c.round()).abs() > 1e-9 * c.max(1.0) {
                return Err(Error::InvalidInput(format!(
                    "extent {len} is not a multiple of h = {h}"
                )));
            }
            Ok(c.round() as usize + 1)
        };
        let mut dims = vec![count(2.0 * half_width)?; n];
        dims.push(count(height)?);
        if let Some(&m) = dims.iter().min() {
            if m < 8 {
                return Err(Error::GridTooCoarse(m));
            }
        }
        Ok(WeightedGrid {
            n,
            half_width,
            height,
            h,
            s,
            dims,
        })
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, ijk: &[usize]) -> usize {
        let mut idx = 0;
        for a in (0..=self.n).rev() {
            idx = idx * self.dims[a] + ijk[a];
        }
        idx
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.n + 1];
        for a in 0..=self.n {
            out[a] = idx % self.dims[a];
            idx /= self.dims[a];
        }
        out
    }

    pub fn coord(&self, a: usize, i: usize) -> f64 {
        if a < self.n {
            -self.half_width + i as f64 * self.h
        } else {
            i as f64 * self.h
        }
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.coord(a, i))
            .collect()
    }

    pub fn is_boundary(&self, ijk: &[usize]) -> bool {
        (0..self.n).any(|a| ijk[a] == 0 || ijk[a] + 1 == self.dims[a])
            || ijk[self.n] + 1 == self.dims[self.n]
    }

    /// Number of nodes on the thin plane.
    pub fn thin_len(&self) -> usize {
        self.dims[..self.n].iter().product()
    }

    /// Linear index of the `t`-th thin node (thin nodes are the first `thin_len` nodes).
    pub fn thin_point(&self, t: usize) -> Vec<f64> {
        let mut p = self.point(t);
        p.pop();
        p
    }

    /// Vertical extent of the control volume of row `j`.
    fn cv_extent(&self, j: usize) -> (f64, f64) {
        let y = j as f64 * self.h;
        ((y - 0.5 * self.h).max(0.0), (y + 0.5 * self.h).min(self.height))
    }

    /// `int_a^b t^e dt` for `e > -1`.
    fn power_integral(a: f64, b: f64, e: f64) -> f64 {
        (b.powf(e + 1.0) - a.powf(e + 1.0)) / (e + 1.0)
    }

    /// Thin-direction coupling of row `j`: `h^{n-1} int_{CV} t^{1-2s} dt / h`.
    pub fn thin_coupling(&self, j: usize) -> f64 {
        let (a, b) = self.cv_extent(j);
        self.h.powi(self.n as i32 - 2) * Self::power_integral(a, b, self.s.weight_exp())
    }

    /// Vertical coupling between rows `j` and `j+1`: `h^n / int t^{2s-1} dt`.
    pub fn normal_coupling(&self, j: usize) -> f64 {
        let (a, b) = (j as f64 * self.h, (j + 1) as f64 * self.h);
        self.h.powi(self.n as i32) / Self::power_integral(a, b, 2.0 * self.s.get() - 1.0)
    }

    /// `h^n int_{CV} t^e dt`, the volume integral of `x_{n+1}^e` over the control volume of row `j`.
    pub fn cv_moment(&self, j: usize, e: f64) -> f64 {
        let (a, b) = self.cv_extent(j);
        self.h.powi(self.n as i32) * Self::power_integral(a, b, e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum InhomogeneityForm {
    /// Right-hand side `x_{n+1}^{3-2s} f`.
    Cubic,
    /// Right-hand side `x_{n+1}^{1-2s} f`.
    Linear,
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub grid: WeightedGrid,
    pub f: ScalarFn,
    pub form: InhomogeneityForm,
    /// Obstacle on the thin space; `f64::NEG_INFINITY` disables the constraint.
    pub obstacle: ScalarFn,
    /// Dirichlet data on the outer boundary.
    pub dirichlet: ScalarFn,
}

impl ProblemSpec {
    pub fn new(grid: WeightedGrid, dirichlet: ScalarFn) -> Self {
        ProblemSpec {
            grid,
            f: Arc::new(|_| 0.0),
            form: InhomogeneityForm::Cubic,
            obstacle: Arc::new(|_| 0.0),
            dirichlet,
        }
    }

    pub fn with_f(mut self, f: ScalarFn, form: InhomogeneityForm) -> Self {
        self.f = f;
        self.form = form;
        self
    }

    pub fn with_obstacle(mut self, obstacle: ScalarFn) -> Self {
        self.obstacle = obstacle;
        self
    }

    pub fn unconstrained(self) -> Self {
        self.with_obstacle(Arc::new(|_| f64::NEG_INFINITY))
    }
}

/// Assembled system `A w = load` in stencil form.
#[derive(Clone, Debug, Serialize)]
pub struct Operator {
    pub grid: WeightedGrid,
    /// Coupling to the thin-axis neighbours, per row `j`.
    pub thin_coupling: Vec<f64>,
    /// Coupling between rows `j` and `j+1`.
    pub normal_coupling: Vec<f64>,
    pub load: Vec<f64>,
    /// Obstacle at the thin nodes.
    pub obstacle: Vec<f64>,
    /// Dirichlet values at boundary nodes (and zero elsewhere).
    pub boundary: Vec<f64>,
    pub fixed: Vec<bool>,
}

impl Operator {
    pub fn diag(&self, ijk: &[usize]) -> f64 {
        let g = &self.grid;
        let j = ijk[g.n];
        let mut d = 2.0 * g.n as f64 * self.thin_coupling[j] + self.normal_coupling[j];
        if j > 0 {
            d += self.normal_coupling[j - 1];
        }
        d
    }

    /// `(A w)_i` for a node with all neighbours present (non-boundary node).
    pub fn apply_at(&self, w: &[f64], idx: usize, ijk: &[usize]) -> f64 {
        let g = &self.grid;
        let j = ijk[g.n];
        let c = w[idx];
        let mut acc = 0.0;
        let mut stride = 1;
        for a in 0..g.n {
            acc += self.thin_coupling[j] * (2.0 * c - w[idx - stride] - w[idx + stride]);
            stride *= g.dims[a];
        }
        acc += self.normal_coupling[j] * (c - w[idx + stride]);
        if j > 0 {
            acc += self.normal_coupling[j - 1] * (c - w[idx - stride]);
        }
        acc
    }

    /// Area of the thin face of a thin node.
    pub fn thin_area(&self) -> f64 {
        self.grid.h.powi(self.grid.n as i32)
    }

    /// Builds a solution record from arbitrary nodal values.
    pub fn solution_from_values(&self, values: Vec<f64>, iterations: usize) -> DiscreteSolution {
        let g = &self.grid;
        let area = self.thin_area();
        let mut flux = vec![0.0; g.thin_len()];
        let mut contact = vec![false; g.thin_len()];
        for (t, (fl, ct)) in flux.iter_mut().zip(contact.iter_mut()).enumerate() {
            let ijk = g.multi_index(t);
            if self.fixed[t] {
                continue;
            }
            *fl = (self.load[t] - self.apply_at(&values, t, &ijk)) / area;
            *ct = values[t] <= self.obstacle[t];
        }
        let mut interior: f64 = 0.0;
        for idx in g.thin_len()..g.len() {
            if self.fixed[idx] {
                continue;
            }
            let ijk = g.multi_index(idx);
            let r = (self.load[idx] - self.apply_at(&values, idx, &ijk)) / self.diag(&ijk);
            interior = interior.max(r.abs());
        }
        let energy = self.energy(&values);
        let mut sol = DiscreteSolution {
            grid: g.clone(),
            values,
            obstacle: self.obstacle.clone(),
            fixed_thin: self.fixed[..g.thin_len()].to_vec(),
            contact_mask: contact,
            flux,
            energy,
            comp_residual: 0.0,
            interior_residual: interior,
            iterations,
        };
        let rep = sol.complementarity_report();
        sol.comp_residual = rep.obstacle_violation.max(rep.positive_flux).max(rep.product);
        sol
    }

    /// Discrete energy `1/2 w.Aw - load.w` over the free nodes, boundary terms included.
    pub fn energy(&self, w: &[f64]) -> f64 {
        let g = &self.grid;
        let mut e = 0.0;
        let mut strides = vec![1usize; g.n + 1];
        for a in 1..=g.n {
            strides[a] = strides[a - 1] * g.dims[a - 1];
        }
        for idx in 0..g.len() {
            let ijk = g.multi_index(idx);
            let j = ijk[g.n];
            for a in 0..=g.n {
                if ijk[a] + 1 < g.dims[a] {
                    let c = if a < g.n {
                        self.thin_coupling[j]
                    } else {
                        self.normal_coupling[j]
                    };
                    let d = w[idx + strides[a]] - w[idx];
                    e += 0.5 * c * d * d;
                }
            }
            if !self.fixed[idx] {
                e -= self.load[idx] * w[idx];
            }
        }
        e
    }
}

/// Assembles the stencil and load of `spec`. The load satisfies `A w = load`
/// for the discrete equation; with `f = 1` it equals minus the control-volume
/// integral of `x_{n+1}^{3-2s}` (or `x_{n+1}^{1-2s}`).
pub fn assemble(spec: &ProblemSpec) -> Result<Operator> {
    let g = spec.grid.clone();
    let rows = g.dims[g.n];
    let thin_coupling: Vec<f64> = (0..rows).map(|j| g.thin_coupling(j)).collect();
    let normal_coupling: Vec<f64> = (0..rows - 1).map(|j| g.normal_coupling(j)).chain([0.0]).collect();
    let e = match spec.form {
        InhomogeneityForm::Cubic => 3.0 - 2.0 * g.s.get(),
        InhomogeneityForm::Linear => g.s.weight_exp(),
    };
    let moments: Vec<f64> = (0..rows).map(|j| g.cv_moment(j, e)).collect();
    let mut load = vec![0.0; g.len()];
    let mut boundary = vec![0.0; g.len()];
    let mut fixed = vec![false; g.len()];
    for idx in 0..g.len() {
        let ijk = g.multi_index(idx);
        let p = g.point(idx);
        if g.is_boundary(&ijk) {
            fixed[idx] = true;
            boundary[idx] = (spec.dirichlet)(&p);
        } else {
            let fv = (spec.f)(&p);
            if !fv.is_finite() {
                return Err(Error::InvalidInput(format!("inhomogeneity not finite at {p:?}")));
            }
            load[idx] = -fv * moments[ijk[g.n]];
        }
    }
    let obstacle: Vec<f64> = (0..g.thin_len()).map(|t| (spec.obstacle)(&g.thin_point(t))).collect();
    for t in 0..g.thin_len() {
        if fixed[t] && obstacle[t] > boundary[t] + 1e-12 {
            return Err(Error::InvalidInput(format!(
                "obstacle {} above boundary data {} at {:?}",
                obstacle[t],
                boundary[t],
                g.thin_point(t)
            )));
        }
    }
    Ok(Operator {
        grid: g,
        thin_coupling,
        normal_coupling,
        load,
        obstacle,
        boundary,
        fixed,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DiscreteSolution {
    pub grid: WeightedGrid,
    pub values: Vec<f64>,
    /// Obstacle at thin nodes.
    pub obstacle: Vec<f64>,
    /// Thin nodes that carry Dirichlet data (excluded from the complementarity check).
    pub fixed_thin: Vec<bool>,
    pub contact_mask: Vec<bool>,
    /// Discrete weighted flux `x_{n+1}^{1-2s} d_{n+1} w` at thin nodes.
    pub flux: Vec<f64>,
    pub energy: f64,
    pub comp_residual: f64,
    pub interior_residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComplementarityReport {
    /// `max(phi - w, 0)` over thin nodes.
    pub obstacle_violation: f64,
    /// `max(flux, 0)` over thin nodes.
    pub positive_flux: f64,
    /// `max |flux (w - phi)|` over thin nodes with `w > phi`.
    pub product: f64,
}

impl DiscreteSolution {
    pub fn value(&self, ijk: &[usize]) -> f64 {
        self.values[self.grid.index(ijk)]
    }

    /// Wraps nodal samples of a known field (obstacle 0, contact where the thin
    /// value is `<= 0`, flux not available and set to 0).
    pub fn from_samples(grid: WeightedGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        let thin = grid.thin_len();
        let fixed_thin = (0..thin).map(|t| grid.is_boundary(&grid.multi_index(t))).collect();
        Ok(DiscreteSolution {
            contact_mask: values[..thin].iter().map(|v| *v <= 0.0).collect(),
            obstacle: vec![0.0; thin],
            flux: vec![0.0; thin],
            fixed_thin,
            grid,
            values,
            energy: f64::NAN,
            comp_residual: 0.0,
            interior_residual: 0.0,
            iterations: 0,
        })
    }

    /// Samples `f` at every node of `grid`.
    pub fn sample(grid: WeightedGrid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self::from_samples(grid, values)
    }

    pub fn complementarity_report(&self) -> ComplementarityReport {
        let mut rep = ComplementarityReport {
            obstacle_violation: 0.0,
            positive_flux: 0.0,
            product: 0.0,
        };
        for t in 0..self.grid.thin_len() {
            if self.fixed_thin[t] || self.obstacle[t] == f64::NEG_INFINITY {
                continue;
            }
            let gap = self.values[t] - self.obstacle[t];
            rep.obstacle_violation = rep.obstacle_violation.max(-gap);
            rep.positive_flux = rep.positive_flux.max(self.flux[t]);
            if gap > 0.0 {
                rep.product = rep.product.max((self.flux[t] * gap).abs());
            }
        }
        rep
    }

    /// CSV with one row per node: coordinates then value.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let names: Vec<String> = (0..=self.grid.n).map(|a| format!("x{}", a + 1)).collect();
        out.push_str(&format!("# {},w\n", names.join(",")));
        for idx in 0..self.grid.len() {
            let p = self.grid.point(idx);
            let cols: Vec<String> = p.iter().map(|v| format!("{v:.12e}")).collect();
            out.push_str(&format!("{},{:.15e}\n", cols.join(","), self.values[idx]));
        }
        out
    }

    pub fn sidecar(&self) -> SolutionSidecar {
        let rep = self.complementarity_report();
        SolutionSidecar {
            s: self.grid.s.get(),
            n: self.grid.n,
            h: self.grid.h,
            half_width: self.grid.half_width,
            height: self.grid.height,
            dims: self.grid.dims.clone(),
            iterations: self.iterations,
            energy: self.energy,
            interior_residual: self.interior_residual,
            complementarity: rep,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolutionSidecar {
    pub s: f64,
    pub n: usize,
    pub h: f64,
    pub half_width: f64,
    pub height: f64,
    pub dims: Vec<usize>,
    pub iterations: usize,
    pub energy: f64,
    pub interior_residual: f64,
    pub complementarity: ComplementarityReport,
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub omega: f64,
    /// Convergence is tested every `check_every` sweeps.
    pub check_every: usize,
    pub threads: usize,
    /// Record the energy after every sweep (for monotonicity diagnostics).
    pub track_energy: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            max_iter: 100_000,
            omega: 1.5,
            check_every: 10,
            threads: 1,
            track_energy: false,
        }
    }
}

impl SolveOptions {
    /// Relaxation close to the optimum of SOR for the Laplacian on the grid.
    pub fn near_optimal_omega(grid: &WeightedGrid) -> f64 {
        let longest = (2.0 * grid.half_width).max(grid.height);
        2.0 / (1.0 + (std::f64::consts::PI * grid.h / longest).sin())
    }
}

/// Result of [`solve_vi_with`], including the per-sweep energies when requested.
pub struct SolveOutput {
    pub solution: DiscreteSolution,
    pub energy_history: Vec<f64>,
}

pub fn solve_vi(spec: &ProblemSpec, tol: f64, max_iter: usize) -> Result<DiscreteSolution> {
    let opts = SolveOptions {
        tol,
        max_iter,
        ..SolveOptions::default()
    };
    solve_vi_with(spec, &opts).map(|o| o.solution)
}

fn sweep_color(op: &Operator, w: &mut [f64], color: usize, omega: f64, threads: usize) {
    let g = &op.grid;
    let rows: usize = g.len() / g.dims[0];
    let update = |w: &[f64], line: usize, out: &mut Vec<(usize, f64)>| {
        let mut ijk = g.multi_index(line * g.dims[0]);
        let parity = ijk[1..].iter().sum::<usize>() % 2;
        let i0 = if (1 + parity) % 2 == color { 1 } else { 2 };
        let mut i = i0;
        while i + 1 < g.dims[0] {
            ijk[0] = i;
            let idx = line * g.dims[0] + i;
            if !op.fixed[idx] {
                let d = op.diag(&ijk);
                let r = op.load[idx] - op.apply_at(w, idx, &ijk);
                let mut v = w[idx] + omega * r / d;
                if idx < g.thin_len() {
                    v = v.max(op.obstacle[idx]);
                }
                out.push((idx, v));
            }
            i += 2;
        }
    };
    if threads <= 1 {
        let mut buf = Vec::new();
        for line in 0..rows {
            buf.clear();
            update(w, line, &mut buf);
            for &(idx, v) in &buf {
                w[idx] = v;
            }
        }
        return;
    }
    let chunk = rows.div_ceil(threads);
    let results: Vec<Vec<(usize, f64)>> = std::thread::scope(|sc| {
        let wr: &[f64] = w;
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let update = &update;
                sc.spawn(move || {
                    let mut out = Vec::new();
                    for line in (t * chunk)..((t + 1) * chunk).min(rows) {
                        update(wr, line, &mut out);
                    }
                    out
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep thread panicked")).collect()
    });
    for part in results {
        for (idx, v) in part {
            w[idx] = v;
        }
    }
}

/// Converged when the scaled interior residual, the positive thin flux and the
/// flux on the non-contact thin nodes are all below `tol`.
fn residuals(op: &Operator, w: &[f64]) -> f64 {
    let g = &op.grid;
    let area = op.thin_area();
    let mut worst: f64 = 0.0;
    for idx in 0..g.len() {
        if op.fixed[idx] {
            continue;
        }
        let ijk = g.multi_index(idx);
        let r = op.load[idx] - op.apply_at(w, idx, &ijk);
        if idx < g.thin_len() {
            let flux = r / area;
            let gap = w[idx] - op.obstacle[idx];
            worst = worst.max(flux);
            if gap > 0.0 {
                let product = if gap.is_infinite() { flux.abs() } else { (flux * gap).abs() };
                worst = worst.max(product);
            }
        } else {
            worst = worst.max((r / op.diag(&ijk)).abs());
        }
    }
    worst
}

/// Solves the discrete complementarity problem by red-black projected SOR.
pub fn solve_vi_with(spec: &ProblemSpec, opts: &SolveOptions) -> Result<SolveOutput> {
    if !(opts.tol > 0.0) || !(opts.omega > 0.0 && opts.omega < 2.0) {
        return Err(Error::InvalidInput(format!(
            "tol = {}, omega = {} (need tol > 0, 0 < omega < 2)",
            opts.tol, opts.omega
        )));
    }
    let op = assemble(spec)?;
    let g = &op.grid;
    let mut w = op.boundary.clone();
    for t in 0..g.thin_len() {
        if !op.fixed[t] && op.obstacle[t].is_finite() {
            w[t] = w[t].max(op.obstacle[t]);
        }
    }
    let mut history = Vec::new();
    if opts.track_energy {
        history.push(op.energy(&w));
    }
    let check = opts.check_every.max(1);
    let mut res = f64::INFINITY;
    let mut it = 0;
    while it < opts.max_iter {
        sweep_color(&op, &mut w, 0, opts.omega, opts.threads);
        sweep_color(&op, &mut w, 1, opts.omega, opts.threads);
        it += 1;
        if opts.track_energy {
            history.push(op.energy(&w));
        }
        if it % check == 0 || it == opts.max_iter {
            res = residuals(&op, &w);
            if res <= opts.tol {
                return Ok(SolveOutput {
                    solution: op.solution_from_values(w, it),
                    energy_history: history,
                });
            }
        }
    }
    Err(Error::NotConverged {
        max_iter: opts.max_iter,
        residual: res,
        best: Box::new(op.solution_from_values(w, it)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> FracOrder {
        FracOrder::new(v).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(matches!(
            WeightedGrid::new(1, 1.0, 1.0, 0.25, s(0.5)),
            Err(Error::GridTooCoarse(5))
        ));
        let g = WeightedGrid::new(2, 1.0, 1.0, 0.125, s(0.5)).unwrap();
        assert_eq!(g.dims, vec![17, 17, 9]);
        let idx = g.index(&[3, 4, 5]);
        assert_eq!(g.multi_index(idx), vec![3, 4, 5]);
        assert_eq!(g.point(idx), vec![-0.625, -0.5, 0.625]);
    }

    #[test]
    fn load_reproduces_moments() {
        let g = WeightedGrid::new(1, 1.0, 1.0, 0.125, s(0.3)).unwrap();
        let spec = ProblemSpec::new(g.clone(), Arc::new(|_| 0.0)).with_f(Arc::new(|_| 1.0), InhomogeneityForm::Cubic);
        let op = assemble(&spec).unwrap();
        let e = 3.0 - 0.6;
        for j in 0..g.dims[1] - 1 {
            let idx = g.index(&[4, j]);
            let a = (j as f64 * 0.125 - 0.0625).max(0.0);
            let b = j as f64 * 0.125 + 0.0625;
            let exact = 0.125 * (b.powf(e + 1.0) - a.powf(e + 1.0)) / (e + 1.0);
            assert!((op.load[idx] + exact).abs() < 1e-15);
        }
    }

    #[test]
    fn stencil_annihilates_constants_and_x_n() {
        for sv in [0.2, 0.5, 0.8] {
            for n in 1..=2 {
                let g = WeightedGrid::new(n, 1.0, 1.0, 0.125, s(sv)).unwrap();
                let spec = ProblemSpec::new(g.clone(), Arc::new(|_| 0.0));
                let op = assemble(&spec).unwrap();
                let ones = vec![1.0; g.len()];
                let xn: Vec<f64> = (0..g.len()).map(|i| g.point(i)[n - 1]).collect();
                for idx in 0..g.len() {
                    let ijk = g.multi_index(idx);
                    if g.is_boundary(&ijk) {
                        continue;
                    }
                    assert!(op.apply_at(&ones, idx, &ijk).abs() < 1e-12);
                    assert!(op.apply_at(&xn, idx, &ijk).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn unconstrained_linear_data() {
        let g = WeightedGrid::new(1, 1.0, 1.0, 0.0625, s(0.4)).unwrap();
        let spec = ProblemSpec::new(g.clone(), Arc::new(|p| p[0])).unconstrained();
        let opts = SolveOptions {
            tol: 1e-13,
            omega: SolveOptions::near_optimal_omega(&g),
            ..SolveOptions::default()
        };
        let sol = solve_vi_with(&spec, &opts).unwrap().solution;
        for idx in 0..g.len() {
            assert!((sol.values[idx] - g.point(idx)[0]).abs() < 1e-10);
        }
        assert!(sol.contact_mask.iter().all(|c| !c));
    }

    #[test]
    fn large_positive_inhomogeneity_gives_full_contact() {
        let g = WeightedGrid::new(1, 1.0, 1.0, 0.0625, s(0.5)).unwrap();
        let spec = ProblemSpec::new(g.clone(), Arc::new(|_| 0.0)).with_f(Arc::new(|_| 50.0), InhomogeneityForm::Cubic);
        let sol = solve_vi(&spec, 1e-10, 100_000).unwrap();
        for t in 0..g.thin_len() {
            assert_eq!(sol.values[t], 0.0);
            if !sol.fixed_thin[t] {
                assert!(sol.contact_mask[t]);
            }
        }
    }

    #[test]
    fn hand_built_violation_is_reported() {
        let g = WeightedGrid::new(1, 1.0, 1.0, 0.125, s(0.5)).unwrap();
        let spec = ProblemSpec::new(g.clone(), Arc::new(|_| 0.0));
        let op = assemble(&spec).unwrap();
        let mut w = vec![0.0; g.len()];
        w[5] = -0.3;
        let sol = op.solution_from_values(w, 0);
        assert!((sol.complementarity_report().obstacle_violation - 0.3).abs() < 1e-15);
        let zero = op.solution_from_values(vec![0.0; g.len()], 0);
        let rep = zero.complementarity_report();
        assert_eq!(rep.obstacle_violation, 0.0);
        assert_eq!(rep.product, 0.0);
        assert!(zero.contact_mask[3]);
    }

    #[test]
    fn energy_is_monotone() {
        let g = WeightedGrid::new(1, 1.0, 1.0, 0.0625, s(0.3)).unwrap();
        let sv = s(0.3);
        let spec = ProblemSpec::new(g, Arc::new(move |p| crate::closed_forms::w1s(sv, p[0], p[1])))
            .with_f(Arc::new(|p| 0.5 - p[0]), InhomogeneityForm::Cubic);
        let opts = SolveOptions {
            tol: 1e-9,
            track_energy: true,
            ..SolveOptions::default()
        };
        let out = solve_vi_with(&spec, &opts).unwrap();
        for pair in out.energy_history.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12 * pair[0].abs().max(1.0));
        }
    }

    #[test]
    fn threads_do_not_change_results() {
        let g = WeightedGrid::new(1, 1.0, 1.0, 0.0625, s(0.6)).unwrap();
        let sv = s(0.6);
        let spec = ProblemSpec::new(g, Arc::new(move |p| crate::closed_forms::w1s(sv, p[0], p[1])));
        let run = |threads| {
            let opts = SolveOptions {
                tol: 1e-10,
                threads,
                ..SolveOptions::default()
            };
            solve_vi_with(&spec, &opts).unwrap().solution.values
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn not_converged_carries_iterate() {
        let g = WeightedGrid::new(1, 1.0, 1.0, 0.0625, s(0.5)).unwrap();
        let spec = ProblemSpec::new(g, Arc::new(|p| p[0])).unconstrained();
        match solve_vi(&spec, 1e-14, 3) {
            Err(Error::NotConverged { best, max_iter, .. }) => {
                assert_eq!(max_iter, 3);
                assert_eq!(best.iterations, 3);
            }
            other => panic!("unexpected {:?}", other.map(|s| s.iterations)),
        }
    }
}
