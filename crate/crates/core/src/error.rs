use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A scalar argument fell outside its mathematical domain.
    #[error("{what} = {value} outside domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    /// The operation is not defined for this distribution kind.
    #[error("operation not defined for {kind} distributions: {detail}")]
    Kind {
        kind: &'static str,
        detail: &'static str,
    },

    /// A distribution failed its construction invariants.
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// The certified capacity bracket could not be narrowed to the requested
    /// tolerance within the bin budget. Carries the best bracket found.
    #[error("certified bracket [{lower}, {upper}] wider than eps={eps} at the bin budget ({max_bins} bins)")]
    BoundTooWide {
        lower: f64,
        upper: f64,
        eps: f64,
        max_bins: usize,
    },

    /// The requested CSI mode is not supported by this operation.
    #[error("unsupported CSI mode for this operation: {0}")]
    UnsupportedMode(&'static str),

    /// Vector lengths disagree.
    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// Invalid polar code parameters.
    #[error("invalid code parameter: {0}")]
    InvalidCode(String),

    /// The device cannot carry the requested key at the planned rate.
    #[error("device too small: {have} cells, need at least {needed} for the requested key")]
    DeviceTooSmall { needed: usize, have: usize },

    /// Helper data failed to parse.
    #[error("malformed helper data: {0}")]
    MalformedHelper(String),

    /// Reproduction decoded to a message that fails its integrity check.
    #[error("reproduction failed the message integrity check")]
    IntegrityCheckFailed,

    /// An internal cross-check failed; indicates a bug, not bad input.
    #[error("internal consistency check failed: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
