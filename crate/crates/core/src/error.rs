use thiserror::Error;

/// Errors raised by the model, simulators and fits.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("numeric domain error: {0}")]
    Domain(String),

    #[error("coherence length is unbounded: both heating rate and displacement noise vanish")]
    Unbounded,

    #[error("missing field `{0}`")]
    MissingField(&'static str),

    #[error("fit did not converge: {0}")]
    NotConverged(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("invalid input data: {0}")]
    InvalidData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => 1,
            Error::InvalidParameter { .. }
            | Error::MissingField(_)
            | Error::InvalidData(_)
            | Error::DegenerateDesign(_)
            | Error::Config(_) => 2,
            Error::NotConverged(_) => 3,
            Error::Domain(_) | Error::Unbounded => 4,
        }
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Checks `value > 0` and finite.
pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {value}")))
    }
}

/// Checks `value >= 0` and finite.
pub(crate) fn ensure_non_negative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and >= 0, got {value}")))
    }
}
