use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates its documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Operands have incompatible dimensions.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Exact certificate computation was requested beyond the exhaustive
    /// enumeration budget.
    #[error("problem size exceeds enumeration budget: {0}")]
    EnumerationBudget(String),

    /// A level set contained its own source vertex, which would imply a
    /// self-loop.
    #[error("vertex {0} appears in its own level set (self-loop implied)")]
    SelfLoopImplied(usize),

    /// The dictionary matrix for a node does not have full column rank, so
    /// the coefficients are not identifiable from the supplied trajectories.
    #[error("dictionary matrix for node {node} is rank-deficient (rank {rank} of {cols} columns); basis functions are linearly dependent on the supplied trajectories")]
    RankDeficient {
        node: usize,
        rank: usize,
        cols: usize,
    },

    /// A (q, t) record expected by an aggregate computation is missing.
    #[error("missing record for pinch q={q}, time t={t}")]
    MissingRecord { q: usize, t: usize },

    /// Experiment configuration is invalid.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A data file does not conform to its documented format.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
