//! Numerics for the fractional thin obstacle (Signorini) problem for
//! `L_s = div(x_{n+1}^{1-2s} grad)`.
//!
//! - [`closed_forms`]: model solutions and their analytic derivatives.
//! - [`spectral`]: homogeneous solutions with Dirichlet, Neumann and slit data.
//! - [`solver`]: finite-volume discretization and projected SOR.
//! - [`frontier`]: free-boundary extraction, asymptotic fits, barriers, diagnostics.
//! - [`hodograph`]: partial hodograph-Legendre transform and its nonlinear equation.
//! - [`grushin`]: Baouendi-Grushin geometry, operator and polynomial fitting.

pub mod closed_forms;
pub mod error;
pub mod frontier;
pub mod grushin;
pub mod hodograph;
pub mod jet;
pub mod lsq;
pub mod poly;
pub mod solver;
pub mod spectral;

pub use closed_forms::{FracOrder, HalfPoint};
pub use error::{Error, Result};
