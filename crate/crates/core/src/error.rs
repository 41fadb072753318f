use std::fmt;

/// Errors surfaced by dictionary construction and stream sessions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// The dictionary contains no patterns.
    EmptyDictionary,
    /// A pattern of length zero was supplied.
    EmptyPattern,
    /// A pattern exceeds the configured maximum length.
    PatternTooLong { len: usize, max: usize },
    /// The stream grew past the configured maximum; fingerprint error
    /// guarantees are void beyond that point.
    StreamOverflow { max: u64 },
    /// A prefix fingerprint was requested for a position already evicted
    /// from the sliding window.
    Evicted { position: u64 },
    /// Fingerprint algebra was applied to operands whose lengths do not
    /// admit the operation.
    LengthMismatch,
    /// A pattern was routed to a strategy whose preconditions it violates.
    ClassViolation(String),
    /// Invalid configuration (bad prime, impossible overrides, ...).
    InvalidConfig(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyDictionary => write!(f, "dictionary is empty"),
            Error::EmptyPattern => write!(f, "empty pattern"),
            Error::PatternTooLong { len, max } => {
                write!(f, "pattern length {len} exceeds maximum {max}")
            }
            Error::StreamOverflow { max } => {
                write!(f, "stream exceeded configured maximum length {max}")
            }
            Error::Evicted { position } => {
                write!(f, "prefix fingerprint at position {position} was evicted")
            }
            Error::LengthMismatch => write!(f, "fingerprint length mismatch"),
            Error::ClassViolation(msg) => write!(f, "pattern class violation: {msg}"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

impl std::error::Error for Error {}
