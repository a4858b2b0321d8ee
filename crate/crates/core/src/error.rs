//! Error type shared by every module in the crate.

use std::fmt;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Operand shapes do not satisfy an operation's contract.
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// A precondition on inputs was violated (empty sequence, non-scalar
    /// loss, score out of range, ...).
    Contract(String),
    /// Invalid configuration (vocab cap too small, unknown ablation,
    /// incompatible checkpoint, ...).
    Config(String),
    /// A computation produced or consumed a non-finite value.
    Numeric(String),
    /// Toy-language parse failure.
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    /// Filesystem or serialization failure, with the offending path or
    /// line number where known.
    Io(String),
}

impl CoreError {
    pub fn contract(msg: impl Into<String>) -> Self {
        CoreError::Contract(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CoreError::Config(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        CoreError::Numeric(msg.into())
    }
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::Shape { op, lhs, rhs } => {
                write!(f, "{op}: incompatible shapes {lhs:?} and {rhs:?}")
            }
            CoreError::Contract(msg) => write!(f, "contract violation: {msg}"),
            CoreError::Config(msg) => write!(f, "invalid configuration: {msg}"),
            CoreError::Numeric(msg) => write!(f, "numeric failure: {msg}"),
            CoreError::Syntax { line, col, message } => {
                write!(f, "syntax error at {line}:{col}: {message}")
            }
            CoreError::Io(msg) => write!(f, "io: {msg}"),
        }
    }
}

impl std::error::Error for CoreError {}

impl From<std::io::Error> for CoreError {
    fn from(e: std::io::Error) -> Self {
        CoreError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CoreError {
    fn from(e: serde_json::Error) -> Self {
        CoreError::Io(e.to_string())
    }
}
