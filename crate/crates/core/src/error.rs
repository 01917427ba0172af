use thiserror::Error;

use crate::bolometry::voigt::VoigtFit;
use crate::modelfit::lls::TrigFit;

/// Errors produced anywhere in the library.
///
/// Variants are grouped by how a caller is expected to react: validation
/// failures (bad input, fixable by the user), numerical failures (the
/// computation ran but could not produce a trustworthy answer) and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Fock-space truncation too small for the requested state.
    #[error("truncation error: {what} (tail mass {tail_mass:.3e}, dim {dim})")]
    Truncation {
        what: String,
        tail_mass: f64,
        dim: usize,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Voigt fit did not converge; the best iterate is kept for diagnostics.
    #[error("Voigt fit did not converge: {reason} (residual norm {:.3e})", best.residual_norm)]
    FitNonConvergence { reason: String, best: Box<VoigtFit> },

    /// Trigonometric fit whose variance curve cannot belong to a physical state.
    #[error("unphysical trigonometric fit: {reason}")]
    UnphysicalFit { reason: String, fit: TrigFit },

    #[error("solver diverged: {0}")]
    Divergence(String),

    #[error("format error at {location}: {message}")]
    Format { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn format(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Prefixes the message with `ctx` (a stage name, an angle, a file),
    /// keeping the variant.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::InvalidInput(m) => Error::InvalidInput(format!("{ctx}: {m}")),
            Error::Truncation { what, tail_mass, dim } => Error::Truncation {
                what: format!("{ctx}: {what}"),
                tail_mass,
                dim,
            },
            Error::Numerical(m) => Error::Numerical(format!("{ctx}: {m}")),
            Error::FitNonConvergence { reason, best } => Error::FitNonConvergence {
                reason: format!("{ctx}: {reason}"),
                best,
            },
            Error::UnphysicalFit { reason, fit } => Error::UnphysicalFit {
                reason: format!("{ctx}: {reason}"),
                fit,
            },
            Error::Divergence(m) => Error::Divergence(format!("{ctx}: {m}")),
            Error::Format { location, message } => Error::Format {
                location: format!("{ctx}: {location}"),
                message,
            },
            Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), format!("{ctx}: {e}"))),
            Error::Json(e) => Error::Format {
                location: ctx.to_string(),
                message: e.to_string(),
            },
        }
    }

    /// True for errors caused by inputs that fail validation.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::InvalidInput(_))
    }

    /// True for errors coming from file contents or the filesystem.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Json(_) | Error::Format { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be finite, got {v}")))
    }
}
