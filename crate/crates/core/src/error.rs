use thiserror::Error;

use crate::sampling::SampleKind;
use crate::transform::TransformKind;

/// Errors raised by the tensor algebra, estimators and detectors.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("transform matrix is numerically singular (condition estimate {condition:.3e})")]
    SingularTransform { condition: f64 },

    #[error("frontal slice {slice} is not invertible in the transform domain (condition {condition:.3e})")]
    SingularSlice { slice: usize, condition: f64 },

    #[error("decomposition failed: {0}")]
    DecompositionFailed(String),

    #[error("the l-infinity-star norm is only defined for tensor columns (n2 = {n2})")]
    NotATensorColumn { n2: usize },

    #[error("operation requires a DFT or DCT transform, got {0:?}")]
    UnsupportedTransform(TransformKind),

    #[error("basis Gram tensor is ill-conditioned at transform slice {slice} (condition {condition:.3e})")]
    DegenerateBasis { slice: usize, condition: f64 },

    #[error("signal has zero energy")]
    ZeroSignal,

    #[error("cannot draw {requested} samples without replacement from {available} positions")]
    TooManySamples { requested: usize, available: usize },

    #[error("sample set kind mismatch: expected {expected:?}, found {found:?}")]
    KindMismatch { expected: SampleKind, found: SampleKind },

    #[error("restricted basis is rank deficient (rank {rank}, expected {expected})")]
    RankDeficientSample { rank: usize, expected: usize },

    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),

    #[error("false-alarm probability must lie in (0, 1), got {0}")]
    InvalidP(f64),

    #[error("degrees of freedom must be positive, got {0}")]
    InvalidDegrees(i64),

    #[error("spectrum has no positive weight")]
    DegenerateSpectrum,

    #[error("invalid argument: {0}")]
    InvalidArg(String),

    #[error("quantile search did not converge, bracket [{lo}, {hi}]")]
    NoConvergence { lo: f64, hi: f64 },

    #[error("result expected to be real has imaginary residue {residue:.3e}")]
    ComplexResidue { residue: f64 },

    #[error("complex-valued data is not supported here")]
    ComplexData,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("malformed input: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::DimensionMismatch(msg.into()))
}
