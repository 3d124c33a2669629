use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("image must be at least 2x2, got {width}x{height}")]
    ImageTooSmall { width: usize, height: usize },

    #[error("pixel buffer has {actual} values, expected {expected}")]
    BufferLength { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("unsupported differential order {0} (supported: 1..=3)")]
    UnsupportedOrder(usize),

    #[error("channel mismatch: expected {expected}, got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: {left_width}x{left_height} vs {right_width}x{right_height}")]
    DimensionMismatch {
        left_width: usize,
        left_height: usize,
        right_width: usize,
        right_height: usize,
    },

    #[error("operator block {index} must be {expected}x{expected}")]
    BlockShape { index: usize, expected: usize },

    #[error("operator orders differ: {0} vs {1}")]
    OrderMismatch(usize, usize),

    #[error("operator is not admissible for P = {0}")]
    Inadmissible(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dual field violates the dual-norm ball constraint (max pointwise norm {0})")]
    InfeasibleDual(f64),

    #[error("alpha is infinite; use the kernel projection instead of the solver")]
    InfiniteAlpha,

    #[error("parameter point {0:?} lies outside the family box")]
    OutsideBox(Vec<f64>),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
