//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A `GridSpec` violates one of its invariants.
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),

    /// A caller handed in a state, action or argument outside the domain.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Exhaustive enumeration would exceed the configured state cap.
    #[error("state count {count} exceeds cap {cap}")]
    Capacity { count: u64, cap: u64 },

    /// A sampler could not produce a valid sample.
    #[error("sampling failed: {0}")]
    Sampling(String),

    /// Array shapes disagree.
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    /// A metric is undefined on the given inputs (e.g. all distances equal).
    #[error("metric degenerate: {0}")]
    Degenerate(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    /// A binary file had the wrong magic, version or layout.
    #[error("bad file format: {0}")]
    Format(String),

    /// A run directory already holds a record for this cell under a
    /// different config hash.
    #[error("run conflict for cell '{cell}': existing hash {existing} != {ours}")]
    RunConflict {
        cell: String,
        existing: String,
        ours: String,
    },

    /// A referenced checkpoint does not exist.
    #[error("missing checkpoint for run '{0}'")]
    MissingCheckpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
