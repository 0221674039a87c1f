//! Error types shared across the engine.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced by the engine's modules.
#[derive(Debug, Error)]
pub enum Error {
    /// Endpoint unreachable, timed out, or failed at the transport level
    /// after exhausting the profile's retry budget.
    #[error("transport failure on profile `{profile}`: {message}")]
    Transport { profile: String, message: String },

    /// Backend answered with a non-success HTTP status.
    #[error("backend on profile `{profile}` refused the request (status {status})")]
    BackendRefused { profile: String, status: u16 },

    /// Backend returned an embedding of the wrong dimensionality.
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The profile cannot report per-token log probabilities.
    #[error("profile `{profile}` does not expose log probabilities")]
    BackendNoLogprobs { profile: String },

    /// No usable category distribution could be parsed, even after one reprompt.
    #[error("unparseable category distribution from backend: {raw}")]
    UnparseableDistribution { raw: String },

    /// Classification label outside the declared enum, even after one reprompt.
    #[error("unparseable classification label: `{raw}`")]
    UnparseableLabel { raw: String },

    /// An operation precondition was violated by the caller.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A raw resource had no body text to segment.
    #[error("resource `{id}` has an empty body")]
    EmptyBody { id: String },

    /// Two documents share a doc_id within one corpus.
    #[error("duplicate doc_id `{doc_id}`")]
    DuplicateDocId { doc_id: String },

    /// Evidence level outside the 1..=9 hierarchy.
    #[error("invalid evidence level {level}; expected 1..=9")]
    InvalidEvidenceLevel { level: i64 },

    /// A persisted artifact was written by an incompatible format version.
    #[error("unsupported format_version {found} in {what}; this build reads version {expected}")]
    FormatVersion {
        what: String,
        expected: u32,
        found: u32,
    },

    /// Malformed line in a JSONL input.
    #[error("{path}:{line}: {message}")]
    JsonlLine {
        path: String,
        line: usize,
        message: String,
    },

    /// Configuration file invalid or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// Mock fixture table missing or malformed.
    #[error("mock fixture `{name}`: {message}")]
    MockFixture { name: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
