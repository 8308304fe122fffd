use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate rate model: {0}")]
    DegenerateModel(String),
    #[error("finesse diverges for R1*Re = {0}")]
    DivergentFinesse(f64),
    #[error("contrast undefined at I = {current} A: both branches below threshold")]
    UndefinedContrast { current: f64 },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("no threshold discontinuity found: {0}")]
    NoThreshold(String),
    #[error("lock-in configuration would alias: {0}")]
    AliasingConfig(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no zero crossing in lock-in spectrum")]
    NoCrossing,
    #[error("division by zero: {0}")]
    DivisionByZero(String),
    #[error("invalid band [{lo}, {hi}] Hz: {reason}")]
    InvalidBand { lo: f64, hi: f64, reason: String },
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
