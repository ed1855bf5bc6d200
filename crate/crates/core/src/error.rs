use std::io;

use thiserror::Error;

use crate::lp::LpStatus;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("empty property formula")]
    EmptyFormula,

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("intermediate value at layer {layer}, unit {unit} has no finite lower bound")]
    UnboundedIntermediate { layer: usize, unit: usize },

    #[error("missing finite bounds for ambiguous unit {unit} of layer {layer}")]
    MissingBounds { layer: usize, unit: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("LP solver returned {0:?}")]
    Solver(LpStatus),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("oracle: {0}")]
    Oracle(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
