use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate ball")]
    DegenerateBall,
    #[error("empty cell")]
    EmptyCell,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("not smooth: Minkowski exponent k = {0} must exceed 1")]
    NotSmooth(f64),
    #[error("invalid weight {0}: must be positive and finite")]
    InvalidWeight(f64),
    #[error("matrix is not symmetric positive-definite")]
    NotPositiveDefinite,
    #[error("site outside Bregman domain")]
    SiteOutsideDomain,
    #[error("query outside domain")]
    QueryOutsideDomain,
    #[error("gradient undefined at site")]
    GradientUndefinedAtSite,
    #[error("hessian undefined at {0:?}")]
    HessianUndefined(Vec<f64>),
    #[error("degenerate sample: {usable} usable samples, need at least 10")]
    DegenerateSample { usable: usize },
    #[error("insufficient separation for function {index}: ratio {ratio} < required {required}")]
    InsufficientSeparation { index: usize, ratio: f64, required: f64 },
    #[error("empty family")]
    EmptyFamily,
    #[error("eps out of range: {0}")]
    EpsOutOfRange(f64),
    #[error("query outside envelope domain")]
    QueryOutsideEnvelope,
    #[error("max depth {0} exceeded while refining a cell")]
    MaxDepthExceeded(usize),
    #[error("mixed distance kinds in one index")]
    MixedKinds,
    #[error("no sites")]
    NoSites,
    #[error("admissibility gate failed: tau = {0}")]
    TauGate(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("index format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
