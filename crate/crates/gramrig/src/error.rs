//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-Hermitian input: imaginary coefficient magnitude {0:.3e} exceeds 1e-10")]
    NonHermitian(f64),

    #[error("degeneracies {degeneracies:?} inconsistent with K={outcomes} outcomes and Hilbert dimension d={hilbert_dim}")]
    BadDegeneracies {
        degeneracies: Vec<usize>,
        outcomes: usize,
        hilbert_dim: usize,
    },

    #[error("scenario `{scenario}` needs d x d measurement blocks: {0}", .reason)]
    BadScenario { scenario: String, reason: String },

    #[error("shape violates spanning assumption: N={num_columns} < D={ambient_dim}")]
    SpanningViolated {
        num_columns: usize,
        ambient_dim: usize,
    },

    #[error(
        "data matrix rank-deficient: spanning assumption violated (rank {rank} < D={ambient_dim})"
    )]
    DataRankDeficient { rank: usize, ambient_dim: usize },

    #[error("mixed-side knowledge unsupported (open problem): mask has both state and measurement pairs")]
    MixedSideKnowledge,

    #[error("knowledge mask has no state or measurement pairs to test")]
    EmptySideKnowledge,

    #[error("data block must be part of the mask for the global criterion")]
    DataBlockMissing,

    #[error("not uniquely determined: constraint system has rank {rank}, needs {needed}")]
    NotUnique { rank: usize, needed: usize },

    #[error("inconsistent knowledge: residual {residual:.3e} exceeds {allowed:.3e}")]
    InconsistentKnowledge { residual: f64, allowed: f64 },

    #[error("no real configuration explains the data: recovered symmetric matrix is not positive definite (min eigenvalue {min_eig:.3e})")]
    NotPositiveDefinite { min_eig: f64 },

    #[error("SVD failed to converge on a {rows}x{cols} matrix")]
    SvdFailed { rows: usize, cols: usize },

    #[error("exact backend needs integer entries: found {value} at ({row},{col})")]
    NonIntegerEntry { value: f64, row: usize, col: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
