//! Error taxonomy shared by every module in the crate.

use thiserror::Error;

/// Crate-wide error type.
///
/// The variants map onto process exit codes at the CLI boundary:
/// `Config` → 2, `Numeric` → 4, everything else (bad data, bad files,
/// bad arguments) → 3.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside an operation's domain (bad index, bad rate,
    /// mismatched lengths).
    #[error("domain error: {0}")]
    Domain(String),

    /// A value failed an invariant check (off-simplex distribution, negative
    /// loss, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// An operation was called while the receiver is in the wrong state
    /// (unpopulated memory cell, epoch out of sequence).
    #[error("state error: {0}")]
    State(String),

    /// A keyed lookup failed.
    #[error("lookup error: {0}")]
    NotFound(String),

    /// A file or byte stream does not match its declared format.
    #[error("format error: {0}")]
    Format(String),

    /// The experiment configuration is invalid.
    #[error("configuration error: {0}")]
    Config(String),

    /// Synthetic data generation could not satisfy its constraints.
    #[error("generation error: {0}")]
    Generation(String),

    /// Training produced a non-finite quantity.
    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status for this error at the CLI boundary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Numeric(_) => 4,
            _ => 3,
        }
    }
}
