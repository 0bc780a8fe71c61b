use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("numerical blowup at t={t:?}: state {state:?}")]
    NumericalBlowup { t: Option<f64>, state: Vec<f64> },

    #[error("gain floor violated at t={t}: g(x)^2 = {gain_sq} < xi1 = {xi1}")]
    GainFloorViolated { t: f64, gain_sq: f64, xi1: f64 },

    #[error("unknown reference `{0}`")]
    UnknownReference(String),

    #[error("unknown system `{0}`")]
    UnknownSystem(String),

    #[error("unknown controller `{0}`")]
    UnknownController(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("singular control gain |g| = {0:e}")]
    SingularGain(f64),

    #[error("dither has nonzero mean {0:e} over one period")]
    NonZeroMeanDither(f64),

    #[error("negative radius {0} passed to a class-K function")]
    NegativeRadius(f64),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("invalid gains: {0}")]
    InvalidGains(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
