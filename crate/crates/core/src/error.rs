use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("under-resolved {what}: {detail}")]
    UnderResolved { what: &'static str, detail: String },

    #[error("grid extent too small: {0}")]
    GridExtent(String),

    #[error("grids do not match")]
    GridMismatch,

    #[error("empty distribution (zero total mass)")]
    EmptyDistribution,

    #[error("evanescent transverse wavenumber {q:.4e} rad/m (|q| >= k = {k:.4e} rad/m)")]
    Evanescent { q: f64, k: f64 },

    #[error("no peak: data is flat")]
    NoPeak,

    #[error("fit did not converge")]
    NotConverged,

    #[error("not enough data: {0}")]
    NotEnoughData(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors that stem from user-supplied configuration rather
    /// than from numerical breakdown.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::InvalidParameter(_)
                | Error::InvalidGrid(_)
                | Error::UnderResolved { .. }
        )
    }
}
