use thiserror::Error;

/// Errors raised by the simulator, the readout layer and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is missing, unknown or outside its domain.
    #[error("configuration error for `{key}`: {message}")]
    Config { key: String, message: String },

    /// An argument to an operation is outside the accepted domain.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: String,
        actual: String,
    },

    /// A matrix that must be positive semidefinite (or symmetric) is not,
    /// beyond the numerical tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn dim(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) => 3,
            // an unwritable output directory is reported as a configuration problem
            Error::Config { .. } | Error::Input(_) | Error::Dimension { .. } | Error::Io { .. } => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
