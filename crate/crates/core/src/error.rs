use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("grouping pattern violates the non-overlap constraint at row {row}")]
    Overlap { row: usize },
    #[error("group {0} has no assigned antenna column")]
    EmptyGroup(usize),
    #[error("unresolvable configuration: Fisher information is singular (condition number {0:.3e})")]
    Unresolvable(f64),
    #[error("SRL outside search range [{lo}, {hi}]")]
    SrlOutOfRange { lo: f64, hi: f64 },
    #[error("sampling failed: {0}")]
    Sampling(String),
    #[error("over-dense support: {support} active points for {rows} observations")]
    OverDense { support: usize, rows: usize },
    #[error("beam matrix has no group factorization")]
    NotGroupWise,
    #[error("grid point {0} has no group label")]
    Unlabeled(usize),
    #[error("true channel has zero norm")]
    ZeroChannel,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
