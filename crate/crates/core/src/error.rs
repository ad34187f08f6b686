use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("graph is not connected")]
    Disconnected,

    #[error("matrix has no eigenvalue above the zero cutoff")]
    NoPositiveEigenvalue,

    #[error("unsupported atom: {0}")]
    UnsupportedAtom(String),

    #[error("no closed form for smoothed conjugate: {0}")]
    UnsupportedConjugate(String),

    #[error(
        "right-hand side is not in the image of the constraint operator (residual {residual:.3e})"
    )]
    InfeasibleRhs { residual: f64 },

    #[error("iteration diverged at step {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },

    #[error("protocol error: node {to} expected a message from node {from} (edge {from}-{to})")]
    MissingMessage { from: usize, to: usize },

    #[error("constraint operator does not decompose over the network: {0}")]
    UnsupportedTopology(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
