use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not converge: estimated error {error:e} exceeds tolerance {tolerance:e} after {subdivisions} subdivisions")]
    NonConvergence {
        error: f64,
        tolerance: f64,
        subdivisions: usize,
    },

    #[error("weight must be strictly positive at the evaluation point, got {0}")]
    NonPositiveWeight(f64),

    #[error("inconsistent dimensions: {0}")]
    Consistency(String),

    #[error("coefficient {0} is symbolic; supply a numeric override")]
    SymbolicCoefficient(&'static str),

    #[error("scaling fit rejected: r^2 = {r_squared:.6} < {threshold}")]
    FitRejected { r_squared: f64, threshold: f64 },

    #[error("stability test inconclusive: tangential gradient magnitude {0:e} on the test sphere")]
    Inconclusive(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
