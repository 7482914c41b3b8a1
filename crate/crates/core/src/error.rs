use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} must be nondecreasing, violated at index {index}")]
    NotMonotone { what: &'static str, index: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("zero null density at observation {x}; likelihood ratio undefined")]
    ZeroNullDensity { x: f64 },

    #[error("statistic undefined: {0}")]
    UndefinedStatistic(String),

    #[error("stage decision requested but no boundary was crossed")]
    NoBoundaryCrossed,

    #[error("observation source exhausted for stream {stream} at n = {n}")]
    SourceExhausted { stream: usize, n: usize },

    #[error(
        "quantile for level {level} needs at least 10 exceedances; {reps} replicates give {expected:.1}"
    )]
    InfeasibleQuantile { level: f64, reps: usize, expected: f64 },

    #[error("calibration target {target} unreachable for N in [{n_min}, {n_max}]: {detail}")]
    CalibrationFailed {
        target: f64,
        n_min: usize,
        n_max: usize,
        detail: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
