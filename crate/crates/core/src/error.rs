use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("non-finite value in input field at node {0}")]
    NonFiniteInput(usize),

    #[error("derivative order {0} out of range 1..=4")]
    DerivativeOrder(u32),

    #[error("parameters are not variational (alpha = {alpha}, beta/2 = {half_beta})")]
    NotVariational { alpha: f64, half_beta: f64 },

    #[error("operation only defined for alpha = beta = 0 (got alpha = {alpha}, beta = {beta})")]
    UnsupportedParameters { alpha: f64, beta: f64 },

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("newton did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular jacobian (pivot ratio {pivot_ratio:.3e})")]
    SingularJacobian { pivot_ratio: f64 },

    #[error("solution blew up at t = {time}")]
    BlowUp { time: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("seed state is not converged (residual {residual:.3e})")]
    InvalidSeed { residual: f64 },

    #[error("continuation stalled at r = {r} after {points} points")]
    Stall { r: f64, points: usize },

    #[error("event at index {0} is not a pitchfork")]
    WrongEventType(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("mode tracking lost at branch index {index} (best overlap {overlap:.3})")]
    TrackingLost { index: usize, overlap: f64 },

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
