use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite parameter value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error(
        "exact enumeration refused: min(m, n) = {units} exceeds the budget of {budget} units \
         (would need 2^{units} terms)"
    )]
    OracleBudget { units: usize, budget: usize },

    #[error("operation requires a weightless RBM (all weights zero)")]
    NotWeightless,

    #[error("infeasible CSL selection: {0}")]
    InfeasibleSelection(String),

    #[error(
        "RAISE budget exceeded: {required} transitions required, budget is {budget} \
         (subset size x runs x K x repeats)"
    )]
    RaiseBudget { required: u128, budget: u128 },

    #[error("bad magic in {what}: expected {expected:#010x}, found {actual:#010x}")]
    BadMagic {
        what: &'static str,
        expected: u32,
        actual: u32,
    },

    #[error("truncated payload in {what}: expected {expected} bytes, found {actual}")]
    Truncated {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("format error in {what}: {msg}")]
    Format { what: &'static str, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{context}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}")]
    File {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, msg: impl Into<String>) -> Self {
        Error::Format {
            what,
            msg: msg.into(),
        }
    }

    /// Wraps the error with a description of where it happened, leaving the
    /// original message intact.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
