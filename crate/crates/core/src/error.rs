use thiserror::Error;

use crate::model::ModelKind;

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("{param}: expected {expected} entries, found {found}")]
    LengthMismatch {
        param: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{param}[{index}]: expected {dim}x{dim} matrix, found {rows}x{cols}")]
    BlockDimension {
        param: &'static str,
        index: usize,
        dim: usize,
        rows: usize,
        cols: usize,
    },

    #[error("{param}[{index}]: not symmetric")]
    NotSymmetric { param: &'static str, index: usize },

    #[error("{param}{}: not positive definite", index.map(|i| format!("[{i}]")).unwrap_or_default())]
    NotPositiveDefinite {
        param: &'static str,
        index: Option<usize>,
    },

    #[error("model is not well-posed: {0}")]
    NotWellPosed(String),

    #[error("matrix is numerically singular: {0}")]
    Singular(String),

    #[error("matrix is not symmetric within tolerance (relative asymmetry {0:.3e})")]
    AsymmetricMatrix(f64),

    #[error("matrix has {rows}x{cols} entries, not a block grid of {blocks}x{blocks} cells of size {dim}")]
    GridMismatch {
        rows: usize,
        cols: usize,
        blocks: usize,
        dim: usize,
    },

    #[error("realization has {found} values, expected {expected}")]
    RealizationLength { expected: usize, found: usize },

    #[error("cannot convert to {target}: {reason}")]
    InadmissibleTarget { target: ModelKind, reason: String },

    #[error("no closed form for {source_kind} -> {target}")]
    ClosedFormUnavailable {
        source_kind: ModelKind,
        target: ModelKind,
    },

    #[error("reciprocal condition violated at k={}", join(.0))]
    ReciprocalConditionViolated(Vec<usize>),

    #[error("ill-conditioned conditional covariance at k={0}")]
    IllConditioned(usize),

    #[error("pair is {source_kind} -> {target}, expected {expected}")]
    PairMismatch {
        source_kind: ModelKind,
        target: ModelKind,
        expected: &'static str,
    },

    #[error("count must be at least {min}, got {count}")]
    InvalidCount { count: usize, min: usize },
}

fn join(ks: &[usize]) -> String {
    ks.iter()
        .map(|k| k.to_string())
        .collect::<Vec<_>>()
        .join(",")
}
