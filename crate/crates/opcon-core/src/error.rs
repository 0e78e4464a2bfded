//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("subspace is not contained in the given outer subspace (residual {residual:.3e})")]
    NotContained { residual: f64 },

    #[error("inconsistent linear system: least-squares residual {residual:.3e}")]
    InconsistentSystem { residual: f64 },

    #[error("empty dataset where at least one example is required")]
    EmptyDataset,

    #[error("example {id} has no label")]
    UnlabeledExample { id: String },

    #[error("duplicate example id {id}")]
    DuplicateId { id: String },

    #[error("covariance matrix is not positive-definite")]
    NotPositiveDefinite,

    #[error("mixture weights sum to {sum}, expected 1")]
    BadMixtureWeights { sum: f64 },

    #[error("pool exhausted: requested {requested}, only {available} available")]
    PoolExhausted { requested: usize, available: usize },

    #[error("prompt size {m} exceeds dataset size {available}")]
    PromptTooLarge { m: usize, available: usize },

    #[error("negative selection score {score} at index {index}")]
    NegativeScore { index: usize, score: f64 },

    #[error("transition graph is reducible; components: {components:?}")]
    ReducibleChain { components: Vec<Vec<usize>> },

    #[error("scripted labeler exhausted after {answered} responses")]
    ScriptExhausted { answered: usize },

    #[error("labeler stream closed")]
    LabelerClosed,

    #[error("disagreement search failed: models still differ on the concept space (gap {gap:.3e})")]
    SearchFailure { gap: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("generator stub: {0}")]
    Stub(String),

    #[error("uncertainty sampling requires a classifier model")]
    UncertaintyNeedsClassifier,

    #[error("concept {concept_id} has not converged; run its session to convergence first")]
    NotConverged { concept_id: usize },

    #[error("unknown concept id {0}")]
    UnknownConcept(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
