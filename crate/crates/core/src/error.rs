use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("t = {t} us is outside the envelope domain [{start}, {end}]")]
    Domain { t: f64, start: f64, end: f64 },

    #[error("visibility is undefined when both intensities are zero")]
    ZeroIntensity,

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("time grid mismatch: {0}")]
    GridMismatch(String),

    #[error("trace is identically zero")]
    ZeroTrace,

    #[error("delay tau = {tau} us puts t_p + tau outside the pulse window")]
    TauOutOfWindow { tau: f64 },

    #[error("mean intensity {mean} at t = {t} us is below the normalization floor {floor}")]
    BelowFloor { t: f64, mean: f64, floor: f64 },

    #[error("no detectable beat maxima in trace {index}")]
    NoMaxima { index: usize },

    #[error("no spectral peak above the noise floor")]
    NoSpectralPeak,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("all regressor values are identical")]
    DegenerateRegressor,

    #[error("fit did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("sweep failed: {0}")]
    SweepFailed(String),

    #[error("nonpositive temperature {0} K")]
    NonpositiveTemperature(f64),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error in {path}: {reason}")]
    Parse { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by malformed user input (configs, files,
    /// parameters) rather than by a failing computation or the filesystem.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::Config(_)
                | Error::Parse { .. }
                | Error::TooFewPoints { .. }
                | Error::EmptyInput(_)
                | Error::NonpositiveTemperature(_)
        )
    }
}
