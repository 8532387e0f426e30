use thiserror::Error;

/// Errors surfaced by the library and mapped onto CLI exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input data (unparseable numbers, empty files, non-finite values).
    #[error("input error: {0}")]
    Input(String),

    /// A configuration value outside its admissible range.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation called outside its contract (empty chain, n < 2, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// Method-of-moments estimate with no coordinate above the threshold.
    #[error("degenerate estimate: {0}")]
    Degenerate(String),

    /// Non-finite output inside a replication.
    #[error("numeric failure in replication {replication} (seed {seed:#018x}): {message}")]
    Numeric {
        replication: usize,
        seed: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) | Error::Io(_) => 1,
            Error::Config(_) | Error::Usage(_) | Error::Degenerate(_) => 2,
            Error::Numeric { .. } => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
