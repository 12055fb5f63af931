use thiserror::Error;

/// Errors raised by the tensor, mask, quantization and convolution layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid fixed-point format: {0}")]
    InvalidFormat(String),
    #[error("fixed-point format mismatch: {left} vs {right}")]
    FormatMismatch { left: String, right: String },
    #[error("index {index:?} out of bounds for shape {shape:?}")]
    IndexOutOfBounds {
        index: Vec<usize>,
        shape: Vec<usize>,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported mask: {0}")]
    UnsupportedMask(String),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
}
