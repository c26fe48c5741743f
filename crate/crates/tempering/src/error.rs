//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument (dimension mismatch, bad parameter range, ...).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// The chain was asked to start (or continue) from a state with
    /// non-finite log density.
    #[error("invalid chain state: {0}")]
    State(String),

    /// A numeric routine failed to converge or produced non-finite values.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Partition-function estimation exceeded its restart cap.
    #[error("partition estimation stalled at level {level}: {restarts} restarts without {needed} samples")]
    EstimationStall {
        level: usize,
        restarts: usize,
        needed: usize,
    },

    /// Discrete state space larger than the supported cap.
    #[error("state-space capacity exceeded: {got} states (cap {cap})")]
    Capacity { got: usize, cap: usize },

    /// A restriction mask left too little structure to work with.
    #[error("degenerate restriction: {0}")]
    DegenerateRestriction(String),

    /// A canonical path uses a zero-probability edge.
    #[error("invalid canonical path: {0}")]
    Path(String),

    /// An internal invariant that should hold by construction was violated.
    #[error("internal invariant violated: {0}")]
    Internal(String),

    /// Configuration file could not be parsed or validated.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
