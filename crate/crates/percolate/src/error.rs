//! Crate-wide error type.
//!
//! Variants are grouped by how callers are expected to react: argument and
//! config errors are caller bugs, resource limits are refusals to start
//! infeasible work, and the estimator variants (`BracketingFailure`,
//! `UndefinedGiant`) are data-dependent outcomes the CLI reports with a
//! dedicated exit code.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates a precondition (dimension mismatch, negative
    /// radius, intensity above the coupling ceiling, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The operation is undefined for the given space or window kind.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// The requested computation would exceed a hard resource cap.
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    /// A sweep did not cross the requested threshold anywhere on its grid.
    /// Carries the rendered sweep table so the caller can see why.
    #[error("bracketing failure: {message}\nsweep table:\n{table}")]
    BracketingFailure { message: String, table: String },

    /// No spanning cluster exists at the reference intensity, so the
    /// giant-cluster proxy is undefined for this configuration.
    #[error("undefined giant cluster: {0}")]
    UndefinedGiant(String),

    /// An internal invariant failed; always a bug worth flagging in tests.
    #[error("internal invariant violated: {0}")]
    InternalInvariant(String),

    /// A config file failed to parse or validate. `field` names the
    /// offending key; `line` is 1-based (0 for cross-field checks).
    #[error("config error (line {line}, field `{field}`): {message}")]
    Config {
        line: usize,
        field: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn config(line: usize, field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            line,
            field: field.into(),
            message: msg.into(),
        }
    }

    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BracketingFailure { .. } | Error::UndefinedGiant(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
