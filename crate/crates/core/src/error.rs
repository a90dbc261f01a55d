//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A homogeneous denominator vanished: the point maps to infinity.
    #[error("homogeneous denominator {denom:e} vanishes: point maps to infinity")]
    Horizon { denom: f64 },

    /// A projective matrix is not invertible.
    #[error("projective matrix is degenerate (|det| = {det:e})")]
    DegenerateMap { det: f64 },

    /// Depths must be strictly positive.
    #[error("depth must be strictly positive, got {z}")]
    NonPositiveDepth { z: f64 },

    /// A matrix failed rotation validation (orthonormality / determinant).
    #[error("not a rotation matrix: {0}")]
    NotARotation(String),

    /// A named verification precondition does not hold.
    #[error("precondition `{check}` violated: measured {measured:e}, limit {limit:e}")]
    Precondition {
        check: String,
        measured: f64,
        limit: f64,
    },

    /// The weighted normal equations could not be solved.
    #[error("normal equations are singular (textureless or degenerate input)")]
    SingularNormalEquations,

    /// Every robust weight vanished: nothing supports the fit.
    #[error("all robust weights vanished: no supporting pixels")]
    EmptySupport,

    #[error("count mismatch: expected {expected}, got {got}")]
    CountMismatch { expected: usize, got: usize },

    #[error("index {index} out of range ({len} available)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid intrinsics: {0}")]
    BadIntrinsics(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Image file header could not be parsed; offset is the byte position.
    #[error("malformed header at byte {offset}: {detail}")]
    MalformedHeader { offset: usize, detail: String },

    /// Image file ended before all samples were read.
    #[error("truncated data at byte {offset}: expected {expected} sample bytes, got {got}")]
    TruncatedData {
        offset: usize,
        expected: usize,
        got: usize,
    },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    /// Wraps a failure with the pyramid level it occurred at.
    #[error("estimation failed at pyramid level {level}: {source}")]
    AtLevel {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[cfg(feature = "png")]
    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
