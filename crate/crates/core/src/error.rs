use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("coordinate {index} ({value}) lies on or outside the box [{lower}, {upper}]")]
    Boundary {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("moment function returned {got} moments, expected {expected}")]
    Shape { expected: usize, got: usize },

    #[error("value outside the domain of {what}: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("no feasible nuisance value for subvector value {0:?}")]
    InfeasibleSlice(Vec<f64>),

    #[error("particle weights degenerated at stage {stage}: every incremental weight is zero")]
    Degeneracy { stage: usize },

    #[error("equivalence-set oracle inconsistent: profiled distance {distance:e} at the particle's own value exceeds tolerance {tol:e}")]
    OracleInconsistency { distance: f64, tol: f64 },

    #[error("{0} is not supported by this model")]
    Unsupported(String),

    #[error("empty input to {0}")]
    Empty(&'static str),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
