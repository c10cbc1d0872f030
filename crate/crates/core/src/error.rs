use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("truncation mismatch: left has K = {left}, right has K = {right}")]
    TruncationMismatch { left: usize, right: usize },

    #[error("preset {preset} needs truncation K >= {needed}, got K = {got}")]
    TruncationTooSmall {
        preset: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("custom amplitude list has length {got}, expected 2(K+1) = {expected}")]
    AmplitudeLength { got: usize, expected: usize },

    #[error("state cannot be normalized (zero or non-finite norm)")]
    NotNormalizable,

    #[error("density matrix has zero trace")]
    ZeroTrace,

    #[error("amplitude {amplitude:.3e} on the top level |e,{k}> has no dressed partner; raise K")]
    OrphanedTopLevel { k: usize, amplitude: f64 },

    #[error("uniform draw r = {0} is outside [0, 1)")]
    UniformOutOfRange(f64),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("field path has {got} entries, need at least {needed}")]
    PathTooShort { got: usize, needed: usize },

    #[error("reference series does not line up with the record schedule: {0}")]
    ReferenceMisaligned(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("need at least 2 usable points for a fit, got {usable} ({excluded} excluded)")]
    TooFewPoints { usable: usize, excluded: usize },

    #[error("fits are not comparable: {0}")]
    IncompatibleFits(String),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
