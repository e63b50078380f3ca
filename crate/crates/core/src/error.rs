use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("axis {axis} out of range for a {dim}-D grid")]
    AxisOutOfRange { axis: usize, dim: usize },

    #[error("derivative order {order} out of range (allowed 1..={max})")]
    OrderOutOfRange { order: usize, max: usize },

    #[error("grid mismatch between fields")]
    GridMismatch,

    #[error("support of radius {radius} does not fit in a box of length {box_length}")]
    SupportExceedsBox { radius: f64, box_length: f64 },

    #[error("degenerate state: min(1 + psi) = {min_one_plus_psi}")]
    Degenerate { min_one_plus_psi: f64 },

    #[error("non-finite values in evolved fields")]
    NonFinite,

    #[error("need at least {needed} samples with min(1+psi) <= {eta_fit}, found {found}")]
    InsufficientTail {
        needed: usize,
        found: usize,
        eta_fit: f64,
    },

    #[error("fitted slope {0} is not negative")]
    NonNegativeSlope(f64),

    #[error("states in trajectory window are not equally spaced")]
    UnequalSpacing,

    #[error("eps_ring is zero")]
    ZeroEpsilon,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
