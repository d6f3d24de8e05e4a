use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input document.
    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { message: String, line: Option<usize> },

    /// Input that parses but violates an invariant.
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    /// Argument outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent configuration (grid sizes, budgets, flags).
    #[error("configuration error: {0}")]
    Config(String),

    /// A numerical procedure did not converge or produced non-finite values.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Every multi-start of a fit failed.
    #[error("fit failed after {starts} starts; best objective {best_objective:e}")]
    Fit { starts: usize, best_objective: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation { field: field.into(), message: message.into() }
    }

    pub fn parse(message: impl Into<String>, line: Option<usize>) -> Self {
        Error::Parse { message: message.into(), line }
    }

    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Parse { .. } | Error::Validation { .. } | Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
