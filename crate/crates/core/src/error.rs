use thiserror::Error;

/// Errors produced by the analysis library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid time series: {0}")]
    Validation(String),

    #[error("time span of the series is zero")]
    DegenerateSpan,

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unstable search: {0}")]
    Instability(String),

    #[error("degenerate degrees of freedom: n = {n}, eta = {eta}")]
    DegenerateDof { n: usize, eta: usize },

    #[error("series has zero variance; periodogram power is undefined")]
    ZeroVariance,

    #[error("underdetermined fit: {points} points for {params} parameters")]
    Underdetermined { points: usize, params: usize },

    #[error("unknown simulation model {0}; expected 1..=7")]
    UnknownModel(u8),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
