use thiserror::Error;

use crate::solver::DiscreteSolution;

#[derive(Debug, Error)]
pub enum Error {
    #[error("fractional order must lie in (0,1), got {0}")]
    InvalidOrder(f64),
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("weighted normal derivative is degenerate on the contact ray at x_n = {0}")]
    DegeneratePoint(f64),
    #[error("inhomogeneity does not supply {0}")]
    MissingDerivative(&'static str),
    #[error("evaluation radius {needed} exceeds the domain radius {available}")]
    OutOfDomain { needed: f64, available: f64 },
    #[error("eigensolver failure: {0}")]
    SolverFailure(String),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("grid too coarse: {0} nodes along an axis, need at least 8")]
    GridTooCoarse(usize),
    #[error("projected SOR did not converge in {max_iter} sweeps (residual {residual:.3e})")]
    NotConverged {
        max_iter: usize,
        residual: f64,
        best: Box<DiscreteSolution>,
    },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("contact mask is constant, no free boundary")]
    EmptyFreeBoundary,
    #[error("tau = {tau} outside (0, {max})")]
    TauOutOfRange { tau: f64, max: f64 },
    #[error("thin graph too rough: gradient oscillation {0:.3e} above threshold")]
    GraphTooRough(f64),
    #[error("denominator field dips below floor {floor:.1e} at {count} sample(s)")]
    DivisionNearZero { floor: f64, count: usize },
    #[error("monotonicity violated at {} node(s)", .0.len())]
    MonotonicityViolated(Vec<usize>),
    #[error("resampling left {0} empty cell(s)")]
    ResampleGap(usize),
    #[error("negative radicand {0:.3e} in x_(n+1)(y)")]
    NegativeRadicand(f64),
    #[error("point within the axis collar: {0}")]
    AxisSingularity(String),
    #[error("boundary condition violated: max |v| on y_n = 0 is {0:.3e}")]
    BoundaryConditionViolated(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
