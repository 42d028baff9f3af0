use thiserror::Error;

/// Errors raised by tensor arithmetic and the layer primitives.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape {shape:?} holds {expected} elements but {actual} were supplied")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("{op}: dimension mismatch: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("shape extents must be positive, got {0:?}")]
    ZeroExtent(Vec<usize>),
    #[error("{0}: empty batch")]
    EmptyBatch(&'static str),
    #[error("invalid convolution geometry: {0}")]
    ConvGeometry(String),
    #[error("batchnorm backward called with an inference-mode cache")]
    CacheMode,
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        TensorError::Shape {
            op,
            detail: detail.into(),
        }
    }
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
