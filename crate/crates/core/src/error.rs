use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid cost function for firm {firm}: {reason}")]
    InvalidCost { firm: usize, reason: String },

    #[error("firm index {index} out of range for {firms} firms")]
    IndexOutOfRange { index: usize, firms: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("coordinate {index} = {value} lies outside [{lo}, {hi}]")]
    Infeasible { index: usize, value: f64, lo: f64, hi: f64 },

    #[error("{value} lies outside the interval [{lo}, {hi}]")]
    OutsideInterval { value: f64, lo: f64, hi: f64 },

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("partition is empty")]
    EmptyPartition,

    #[error("point is not covered by any leaf of the partition")]
    NotCovered,

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error("oracle budget exceeded: {0}")]
    OracleBudget(String),
}
