use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("tape is not recording; no gradients available")]
    NotRecording,
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("{0}")]
    Metric(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported bit depth: {0}")]
    UnsupportedBitDepth(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("too many samples for NTK: {n} > cap {cap}")]
    NtkTooLarge { n: usize, cap: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
