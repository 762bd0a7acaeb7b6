use thiserror::Error;

use crate::sdp::SdpStatus;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("sensor {sensor} has zero measurement noise; the bound is unbounded")]
    ZeroMeasurementNoise { sensor: usize },

    #[error("sensor {sensor} has a zero channel coefficient; the beam direction is undefined")]
    ZeroChannel { sensor: usize },

    #[error("SDP solver finished with status {status:?} after {iterations} iterations")]
    SdpNotOptimal { status: SdpStatus, iterations: usize },

    #[error("leading block is not rank one: eigenvalues {lambda1:e} and {lambda2:e}")]
    RankRecoveryFailure { lambda1: f64, lambda2: f64 },

    #[error("corner entry {value:e} of the lifted solution is not positive")]
    NonPositiveCorner { value: f64 },

    #[error("outage eigenvalues {i} and {l} are degenerate ({gap:e} apart)")]
    EigenvalueDegeneracy { i: usize, l: usize, gap: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
