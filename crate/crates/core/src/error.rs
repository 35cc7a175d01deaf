use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("resolution mismatch: {left} vs {right}")]
    ResolutionMismatch { left: usize, right: usize },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("gram matrix is singular or ill-conditioned (pivot {pivot:e} at {index})")]
    Conditioning { index: usize, pivot: f64 },

    #[error("solver did not converge in {iters} iterations (worst row {row}, residual {residual:e})")]
    Convergence { iters: usize, row: usize, residual: f64 },

    #[error("empty length bucket {0}")]
    EmptyBucket(usize),

    #[error("image has no mass (grand sum {0:e})")]
    EmptyScene(f64),

    #[error("target set is empty")]
    EmptyTarget,

    #[error("particle set is empty")]
    EmptyParticles,

    #[error("every grid action was filtered out")]
    NoActions,

    #[error("spawn region lies outside the workspace")]
    InvalidRegion,

    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("file truncated: {0}")]
    Truncated(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
