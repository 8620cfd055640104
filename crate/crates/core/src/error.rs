use thiserror::Error;

/// Errors raised by the statistics, mechanisms and auditing routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty statistic list")]
    EmptyStatistics,

    #[error("batch size must be ≥ 2 (got {0})")]
    BatchTooSmall(usize),

    #[error("covariance not positive definite")]
    NotPositiveDefinite,

    #[error("covariance not positive definite after ridge {ridge:e}; use a larger ridge")]
    RidgeTooSmall { ridge: f64 },

    #[error("covariance not symmetric")]
    NotSymmetric,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{name} = {value} out of range {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("ratio undefined: non-positive loss {0} in denominator")]
    RatioUndefined(f64),

    #[error("need both member and non-member rounds (n0 = {n0}, n1 = {n1})")]
    SingleClass { n0: usize, n1: usize },

    #[error("adversary {0} is not supported by this game")]
    UnsupportedAdversary(&'static str),

    #[error("adversary {0} requires the insertion time")]
    MissingInsertionTime(&'static str),

    #[error("target level {0} is not attainable")]
    Unattainable(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_range(
    name: &'static str,
    value: f64,
    ok: bool,
    range: &'static str,
) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::OutOfRange { name, value, range })
    }
}
