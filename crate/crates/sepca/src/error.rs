//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by basis construction, transforms, estimation and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument was out of its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The sampling criterion admitted no basis function at all.
    #[error("empty basis: no Fourier-Bessel function satisfies the sampling criterion (c = {c}, R = {r})")]
    EmptyBasis { c: f64, r: usize },

    /// Input data is degenerate for the requested operation (e.g. an all-zero mean).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A (k, q) pair that is not part of the basis was requested.
    #[error("basis index out of range: k = {k}, q = {q}")]
    IndexOutOfRange { k: i64, q: usize },

    /// Numerical failure (non-convergence, singular system without remedy).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed or inconsistent on-disk data.
    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
