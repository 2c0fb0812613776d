use thiserror::Error;

use crate::params::ApproximationMode;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("density matrix trace is {0}, expected 1")]
    TraceNotUnity(f64),

    #[error("operation not supported in {0:?} mode")]
    UnsupportedMode(ApproximationMode),

    #[error("resource cap exceeded: {0}")]
    ResourceCap(String),

    #[error("no superradiant transition: {0}")]
    NoTransition(String),

    #[error("step size underflow at t = {t} (h = {h:.3e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("integration exceeded {steps} steps at t = {t}")]
    TooManySteps { steps: usize, t: f64 },

    #[error("non-finite state encountered at t = {t}")]
    NonFinite { t: f64 },

    #[error("damped-cosine fit did not converge (relative residual {residual:.3e})")]
    FitFailed { residual: f64 },

    #[error("input is not a fixed point (flow norm {0:.3e})")]
    NotFixedPoint(f64),

    #[error("steady state solve failed: {0}")]
    SteadyState(String),

    #[error("degenerate steady state: {0}")]
    Degenerate(String),

    #[error("photon cutoff not converged at n_max = {n_max} (observable shift {shift:.3e})")]
    CutoffNotConverged { n_max: usize, shift: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
