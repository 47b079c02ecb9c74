//! Error types shared across the pipeline.

use thiserror::Error;

/// Errors raised by model construction, graph building, and arbitration.
#[derive(Debug, Error)]
pub enum CoreError {
    /// `logit` is only defined strictly inside the open unit interval.
    #[error("logit domain error: probability must lie in (0, 1), got {0}")]
    LogitDomain(f64),

    /// A claim reached an embedding-dependent stage without an embedding.
    #[error("claim `{0}` carries no embedding")]
    MissingEmbedding(String),

    /// Embeddings must be unit-normalized on entry.
    #[error("embedding for `{id}` is not unit length (norm {norm})")]
    NotUnitNorm { id: String, norm: f64 },

    /// Two embeddings of different dimensionality were compared.
    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    /// An operation referenced a node id absent from the graph.
    #[error("unknown node id `{0}`")]
    UnknownNode(String),

    /// A truth-label lookup failed during scenario evaluation.
    #[error("no truth label for node `{0}`")]
    UnknownLabel(String),

    /// Configuration failed validation; the message names the offending key.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A structural invariant of the evidence graph does not hold.
    #[error("graph invariant violated: {0}")]
    InvalidGraph(String),

    /// A backend call failed (and fail-closed handling was disabled or
    /// inapplicable).
    #[error(transparent)]
    Backend(#[from] BackendError),

    /// File-system level failure while reading or writing artifacts.
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// An artifact or fixture file did not parse as the expected JSON shape.
    #[error("malformed JSON artifact: {0}")]
    Json(#[from] serde_json::Error),
}

/// Errors raised by evidence backends (oracle tables and remote endpoints).
#[derive(Debug, Error)]
pub enum BackendError {
    /// The oracle table has no extraction rule for the requested document.
    #[error("oracle table has no extraction rule for document `{0}`")]
    UnknownDocument(String),

    /// The oracle table has no embedding rule for a text it was asked to embed.
    #[error("oracle table has no embedding rule for text {0:?}")]
    UnknownText(String),

    /// The oracle table itself is inconsistent (bad vectors, dangling winners).
    #[error("invalid oracle table: {0}")]
    InvalidTable(String),

    /// The remote endpoint could not be reached or returned a non-success
    /// status.
    #[error("transport failure: {0}")]
    Transport(String),

    /// The remote model's output stayed malformed through all retries.
    #[error("malformed backend response after {attempts} attempt(s): {detail}")]
    Malformed { attempts: u32, detail: String },

    /// The credential environment variable named in the config is unset.
    #[error("credential environment variable `{0}` is not set")]
    MissingCredential(String),
}

/// Convenient result alias used throughout the crate.
pub type Result<T, E = CoreError> = std::result::Result<T, E>;
