use thiserror::Error;

use crate::expr::ExprError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{what} violated: residual {residual:e}")]
    AxiomViolation { what: String, residual: f64 },
    #[error("evaluation kept failing after {attempts} resamples: {last}")]
    Sampling { attempts: usize, last: ExprError },
    #[error("bracket does not close on the kernel at {point:?} (residual {residual:e})")]
    KernelNotClosed { point: Vec<f64>, residual: f64 },
    #[error("trajectory left the chart at t = {time} (x = {point:?})")]
    ChartExit { time: f64, point: Vec<f64> },
    #[error("base endpoints not fixed across the variation (drift {drift:e})")]
    EndpointsNotFixed { drift: f64 },
    #[error("paths are not composable: endpoint gap {gap:e}")]
    EndpointMismatch { gap: f64 },
    #[error("anchor rank changes from {expected} to {found} at {point:?}")]
    RankDrop { expected: usize, found: usize, point: Vec<f64> },
    #[error("curvature is not center-valued (residual {residual:e}); the monodromy integral needs a central curvature")]
    HypothesisViolated { residual: f64 },
    #[error("center frame is not flat along the sphere (residual {residual:e}); local coefficient systems are not supported")]
    NontrivialLocalSystem { residual: f64 },
    #[error("quadrature did not converge: Richardson estimate {estimate:e} exceeds {tolerance:e}")]
    NonConvergence { estimate: f64, tolerance: f64 },
    #[error("{0}")]
    Invalid(String),
}

impl Error {
    /// Numerical failures as opposed to bad input or violated axioms.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonConvergence { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
