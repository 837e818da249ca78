//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("vertex {v} out of range for p={p}")]
    VertexOutOfRange { v: usize, p: usize },
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("directed part has a cycle through {0:?}")]
    Cycle(Vec<usize>),
    #[error("permutation is not a bijection on the vertex set")]
    BadPermutation,
    #[error("graph sizes differ: {lhs} vs {rhs}")]
    SizeMismatch { lhs: usize, rhs: usize },
}

#[derive(Debug, Error)]
pub enum SemError {
    #[error("I - B is singular; effect matrix does not define a recursive SEM")]
    SingularSystem,
    #[error("exact moments are unavailable for lognormal errors")]
    LognormalOracle,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Error)]
pub enum MomentError {
    #[error("linear system is numerically singular (rcond {rcond:.3e})")]
    Singular { rcond: f64 },
    #[error("unsupported moment order K={0}; only 3 and 4 are implemented")]
    UnsupportedOrder(u32),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Error)]
pub enum TestError {
    #[error("empirical-likelihood test needs n > q (n={n}, q={q})")]
    TooFewObservations { n: usize, q: usize },
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("eta must be positive, got {0}")]
    BadEta(f64),
}
