use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Evaluation exactly at a branch point of the strip field.
    #[error("singular point: {0}")]
    Singularity(String),

    /// A numerical routine failed (non-finite residuals, quadrature failure, ...).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Malformed or insufficient input data.
    #[error("input error: {0}")]
    Input(String),

    /// A fit could not be started or the data cannot support it.
    #[error("fit error: {0}")]
    Fit(String),

    /// A data row violating a data-set invariant (1-based row index).
    #[error("row {row}: {message}")]
    InvalidRow { row: usize, message: String },

    #[error("csv error at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

/// Rejects NaN and infinities with a domain error naming the argument.
pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be finite, got {value}")))
    }
}
