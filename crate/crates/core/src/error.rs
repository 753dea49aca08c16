use std::path::PathBuf;

/// Errors raised across the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("outside the domain of `{op}`: {message}")]
    Domain { op: &'static str, message: String },

    #[error("{what} has {n} members; at most {max} supported")]
    SizeLimit { what: &'static str, n: usize, max: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("annual payment {payment} does not cover interest {interest}; debt never clears")]
    NeverClears { payment: f64, interest: f64 },

    #[error("{path}: row {row}, field `{field}`: {message}")]
    Record { path: PathBuf, row: usize, field: String, message: String },

    #[error("{path}: at `{json_path}`: {message}")]
    Schema { path: PathBuf, json_path: String, message: String },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation { field: field.into(), message: message.into() }
    }

    pub(crate) fn domain(op: &'static str, message: impl Into<String>) -> Self {
        Error::Domain { op, message: message.into() }
    }

    /// True for errors caused by bad input rather than the filesystem.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
