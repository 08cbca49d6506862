use thiserror::Error;

/// Errors raised by constructors, validators, and simulation runs.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid dynamics: {0}")]
    InvalidDynamics(String),

    #[error("invalid uncertainty box: {0}")]
    InvalidBox(String),

    #[error("invalid cost parameters: {0}")]
    InvalidCost(String),

    #[error("invalid safety bounds: {0}")]
    InvalidBounds(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("confidence ball outside prior (center ({0}, {1}), radius {2})")]
    BallOutsidePrior(f64, f64, f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("trajectory diverged at step {step} (|x| = {magnitude:.3e})")]
    Diverged { step: usize, magnitude: f64 },

    #[error("initial controller fails the safe-margin check at x = {0}")]
    InitControllerUnsafe(f64),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
