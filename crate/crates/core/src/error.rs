use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("singular matrix: pivot {pivot:.3e} below threshold {threshold:.3e}")]
    SingularMatrix { pivot: f64, threshold: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("coupling vector must start with 1, got {0}")]
    InvalidCoupling(String),

    #[error("grid offset {offset_deg} deg at index {index} exceeds half the grid step ({half_step_deg} deg)")]
    OffsetOutOfRange { index: usize, offset_deg: f64, half_step_deg: f64 },

    #[error("could not place {k} targets {min_sep_deg} deg apart after {attempts} attempts")]
    InfeasibleScene { k: usize, min_sep_deg: f64, attempts: usize },

    #[error("covariance has {significant} significant eigenvalues, need at least {needed}")]
    RankDeficient { significant: usize, needed: usize },

    #[error("length mismatch: estimated {estimated} angles, truth has {truth}")]
    LengthMismatch { estimated: usize, truth: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    pub fn parse(path: impl AsRef<std::path::Path>, message: impl ToString) -> Self {
        Error::Parse { path: path.as_ref().display().to_string(), message: message.to_string() }
    }

    /// True for errors caused by user input rather than by a failed computation.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_) | Error::InfeasibleScene { .. } | Error::Io { .. } | Error::Parse { .. }
        )
    }
}
