//! Error type shared by every subsystem.

use std::fmt;
use std::io;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors emitted by the laboratory.
#[derive(Debug)]
pub enum Error {
    /// Two operands have incompatible shapes.
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// An index fell outside its valid range.
    Index {
        what: &'static str,
        index: usize,
        bound: usize,
    },
    /// A configuration value failed validation.
    Config(String),
    /// A data file could not be parsed.
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    /// Wrapper around I/O failures, tagged with the path involved.
    Io { path: String, source: io::Error },
    /// Training diverged or was otherwise aborted.
    Training { stage: String, detail: String },
    /// A numeric guard caught a non-finite value before it could propagate.
    NonFinite { context: &'static str },
    /// Evaluation was asked to do something undefined (empty test set, ...).
    Eval(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, left, right } => write!(
                f,
                "{op}: incompatible shapes {}x{} and {}x{}",
                left.0, left.1, right.0, right.1
            ),
            Error::Index { what, index, bound } => {
                write!(f, "{what} index {index} out of range (bound {bound})")
            }
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Parse { path, line, msg } => {
                write!(f, "parse error in {path} at line {line}: {msg}")
            }
            Error::Io { path, source } => write!(f, "io error on {path}: {source}"),
            Error::Training { stage, detail } => write!(f, "training failed in {stage}: {detail}"),
            Error::NonFinite { context } => write!(f, "non-finite value in {context}"),
            Error::Eval(msg) => write!(f, "evaluation error: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl Error {
    pub fn io(path: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
