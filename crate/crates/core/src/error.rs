use alloc::string::String;

/// Crate-wide error type. Every fallible contract in the toolkit funnels
/// through this enum so callers get one `Result` alias.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("data length {len} does not match shape {channels}x{height}x{width}")]
    ShapeDataMismatch {
        channels: usize,
        height: usize,
        width: usize,
        len: usize,
    },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("shape mismatch: {left_channels}x{left_height}x{left_width} vs {right_channels}x{right_height}x{right_width}")]
    ShapeMismatch {
        left_channels: usize,
        left_height: usize,
        left_width: usize,
        right_channels: usize,
        right_height: usize,
        right_width: usize,
    },
    #[error("{axis} extent {extent} is not divisible by block size {k}")]
    NotDivisible {
        axis: &'static str,
        extent: usize,
        k: usize,
    },
    #[error("block size must be at least 1")]
    ZeroBlockSize,
    #[error("mixing weight {w} outside [0, 1)")]
    WeightOutOfRange { w: f64 },
    #[error("timestep {t} outside valid range {lo}..={hi}")]
    TimestepOutOfRange { t: usize, lo: usize, hi: usize },
    #[error("jump source index {s} must be strictly below current index {t}")]
    BadJump { t: usize, s: usize },
    #[error("label {label} outside 0..={max}")]
    LabelOutOfRange { label: usize, max: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("singular linear system")]
    SingularSystem,
    #[error("power iteration did not converge within {0} iterations")]
    PowerIterationDiverged(usize),
    #[error("non-finite gradient at parameter index {0}")]
    NonFiniteGradient(usize),
    #[error("precondition not met: {0}")]
    Precondition(String),
}

pub type Result<T> = core::result::Result<T, Error>;
