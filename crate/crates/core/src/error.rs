use thiserror::Error;

/// Errors produced across the simulation and inference pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A physical or structural invariant of a configuration value is violated.
    #[error("validation error: {0}")]
    Validation(String),

    /// Configuration text could not be parsed.
    #[error("parse error{}: {message}", location.as_ref().map(|l| format!(" at {l}")).unwrap_or_default())]
    Parse { location: Option<String>, message: String },

    /// The data do not support the requested estimate.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// A nonlinear fit failed to produce a usable solution.
    #[error("fit error: {0}")]
    Fit(String),

    /// A numerical routine failed to converge.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite, got {value}")))
    }
}
