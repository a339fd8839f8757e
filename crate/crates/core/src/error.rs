use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("affine map row {row} has {count} non-zero entries (at most one allowed)")]
    AffineRowRestriction { row: usize, count: usize },

    #[error("invalid affine map: {0}")]
    InvalidAffineMap(String),

    #[error("non-finite state while integrating cell {cell}, input {input}")]
    NonFinite { cell: usize, input: usize },

    #[error("jacobian bounds contain NaN at entry ({row}, {col})")]
    JacobianNaN { row: usize, col: usize },

    #[error("integration produced a non-finite state")]
    NonFiniteIntegration,

    #[error("the Out symbol has no outgoing transitions")]
    OutHasNoSuccessors,

    #[error("state {0} out of range")]
    StateOutOfRange(usize),

    #[error("input {0} out of range")]
    InputOutOfRange(usize),

    #[error("linearization is not stabilizable: {0}")]
    NotStabilizable(String),

    #[error("sublevel set appears unbounded (radius exceeded {0})")]
    UnboundedLevelSet(f64),

    #[error("no verified level value found: {0}")]
    NoCertifiedLevel(String),

    #[error("left winning set at t = {t}: cell {cell}")]
    LeftWinningSet { t: f64, cell: usize },

    #[error("invalid settings: {0}")]
    InvalidSettings(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
