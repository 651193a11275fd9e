use thiserror::Error;

use crate::expr::{EvalError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grids differ between operands")]
    GridMismatch,
    #[error("order must be positive, got {0}")]
    OrderNonPositive(f64),
    #[error("order {order} is outside the supported range for {what}")]
    OrderOutOfRange { order: f64, what: &'static str },
    #[error("skewness {gamma} exceeds the admissible bound {bound}")]
    SkewnessOutOfRange { gamma: f64, bound: f64 },
    #[error("diffusion coefficient is negative ({value}) at x = {x}")]
    NegativeDiffusion { x: f64, value: f64 },
    #[error("jump kernel is negative ({value}) at (x, z) = ({x}, {z})")]
    NegativeKernel { x: f64, z: f64, value: f64 },
    #[error("off-diagonal entry {value} at ({row}, {col}) breaks conditional positivity")]
    PositivityViolation { row: usize, col: usize, value: f64 },
    #[error("pairing operator is singular")]
    SingularF,
    #[error("implicit Euler step failed to solve (dt = {dt})")]
    StepTooLarge { dt: f64 },
    #[error("bad time interval [{s}, {t}]")]
    BadInterval { s: f64, t: f64 },
    #[error("jump rate is not bounded on the simulation box: {0}")]
    UnboundedRate(String),
    #[error("stability index {0} outside (0, 2]")]
    BetaOutOfRange(f64),
    #[error("coefficient is not smooth enough: {0}")]
    SmoothnessUnavailable(String),
    #[error("spot {0} lies outside the interior window")]
    SpotOutsideWindow(f64),
    #[error("{0}")]
    Invalid(String),
}
