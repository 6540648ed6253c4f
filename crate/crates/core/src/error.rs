use thiserror::Error;

/// Errors raised by the tomography library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension {0} is not a perfect square")]
    NotPerfectSquare(usize),

    #[error("non-invertible entangler: reciprocal condition number {rcond:e} below {threshold:e}")]
    NonInvertibleEntangler { rcond: f64, threshold: f64 },

    #[error("operation annihilates the input state (occurrence probability {0:e})")]
    AnnihilatingOperation(f64),

    #[error("not completely positive: eigenvalue {eigenvalue:e} below tolerance {tolerance:e}")]
    NotCompletelyPositive { eigenvalue: f64, tolerance: f64 },

    #[error("not a contraction: operator norm {0}")]
    NotContraction(f64),

    #[error("Kraus operators violate sum K^dag K <= I (eigenvalue {0:e})")]
    NotTraceDecreasing(f64),

    #[error("unphysical deconvolution: quantum efficiency {0} must lie in (0.5, 1]")]
    UnphysicalDeconvolution(f64),

    #[error("ill-conditioned kernel on diagonal offset {offset}: {reason}")]
    IllConditionedKernel { offset: usize, reason: String },

    #[error("quorum does not span operator space: Gram rank {rank} < {needed}")]
    SpanDeficiency { rank: usize, needed: usize },

    #[error("reference element too small, choose different (i0,j0): estimate {value:e} vs std error {std_error:e}")]
    ReferenceTooSmall { value: f64, std_error: f64 },

    #[error("no heralded samples")]
    EmptyHeraldedSet,

    #[error("negative probability {0:e}: state is not numerically positive semidefinite")]
    NumericalPsd(f64),

    #[error("truncation deficit {deficit:e} exceeds bound {bound:e}")]
    TruncationDeficit { deficit: f64, bound: f64 },

    #[error("zero matrix has no defined phase")]
    ZeroMatrix,

    #[error("index {index} outside window of size {size}")]
    IndexOutOfWindow { index: usize, size: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("kernel cache: {0}")]
    KernelCache(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape(rows: usize, cols: usize) -> String {
    format!("{rows}x{cols}")
}
