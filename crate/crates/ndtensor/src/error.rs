use thiserror::Error;

/// Errors raised by tensor construction, tape operations, and the optimizer.
#[derive(Debug, Error)]
pub enum NdError {
    #[error("shape {shape:?} holds {expected} elements but {got} values were provided")]
    ShapeDataMismatch {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("dimension mismatch: {left:?} is not compatible with {right:?} for {op}")]
    DimensionMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op} expects a 2-d tensor, got shape {shape:?}")]
    NotTwoDimensional { op: &'static str, shape: Vec<usize> },
    #[error("convolution width {width} exceeds input length {len}")]
    KernelWiderThanInput { width: usize, len: usize },
    #[error("softmax row {row} has no unmasked positions")]
    FullyMaskedRow { row: usize },
    #[error("mask length {mask} does not match axis length {axis}")]
    MaskLengthMismatch { mask: usize, axis: usize },
    #[error("dropout probability {p} is outside [0, 1)")]
    InvalidDropout { p: f64 },
    #[error("no unmasked positions to aggregate over")]
    EmptyMask,
    #[error("concat requires at least one input")]
    EmptyConcat,
    #[error("target is not one-hot (entry {index} = {value})")]
    NotOneHot { index: usize, value: f64 },
    #[error("probabilities sum to {sum}, expected 1 within 1e-6")]
    NotNormalized { sum: f64 },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("backward was already run on this tape")]
    TapeConsumed,
    #[error("variable belongs to tape {var_tape}, not tape {tape}")]
    DetachedVar { var_tape: u64, tape: u64 },
    #[error("row index {row} out of bounds for {rows} rows")]
    RowOutOfBounds { row: usize, rows: usize },
    #[error("non-finite gradient at flat index {index} of parameter ({value})")]
    NonFiniteGrad { index: usize, value: f64 },
    #[error("optimizer state length {state} does not match parameter length {param}")]
    StateLengthMismatch { state: usize, param: usize },
}

pub type Result<T> = std::result::Result<T, NdError>;
