use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = QdmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum QdmError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("bin size {n_bin} exceeds map dimensions {width}x{height}")]
    BinTooLarge {
        n_bin: usize,
        width: usize,
        height: usize,
    },

    #[error("malformed file format: {0}")]
    Format(String),

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("evaluation point lies on a current filament ({0})")]
    Singular(String),

    #[error("field evaluated at the dipole position")]
    ZeroSeparation,

    #[error("conversion slope must be non-zero")]
    ZeroSlope,

    #[error("slope must be strictly positive, got {0}")]
    NonPositiveSlope(f64),

    #[error("sensitivity is unbounded for a zero free-evolution interval")]
    UnboundedSensitivity,

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("fit did not converge after {iterations} iterations (last cost {cost:e})")]
    NoConvergence { iterations: usize, cost: f64 },

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("region of interest: {0}")]
    Roi(String),

    #[error("series too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("config error: {0}")]
    Config(String),
}

impl QdmError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        QdmError::InvalidArgument(msg.into())
    }
}
