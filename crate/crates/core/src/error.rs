use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("even sample count n = {0}: the transform needs odd n, drop the last sample before transforming")]
    EvenSampleCount(usize),

    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("criterion identically zero")]
    CriterionIdenticallyZero,

    #[error("variance unidentifiable with a single curve")]
    SingleCurve,

    #[error("signal energy indistinguishable from noise")]
    SignalIndistinguishableFromNoise,

    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidConfidence(f64),

    #[error("bandwidth must be positive, got {0}")]
    InvalidBandwidth(f64),

    #[error("landmark undefined: {0}")]
    LandmarkUndefined(String),

    #[error("estimation failed: {0}")]
    EstimationFailed(String),
}
