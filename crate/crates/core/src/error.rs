use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("divisibility error: remainder {remainder:.3e} exceeds {tolerance:.1e} of numerator norm")]
    Divisibility { remainder: f64, tolerance: f64 },
    #[error("symmetry error: {0}")]
    Symmetry(String),
    #[error("construction error: identity `{identity}` violated (residual {residual:.3e})")]
    Construction { identity: String, residual: f64 },
    #[error("coefficient extraction error: methods disagree by {0:.3e}")]
    Extraction(f64),
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("integration failed at t = {time}: {reason}")]
    Integration { time: f64, reason: String },
    #[error("tracking failed at t = {time}: {reason}")]
    Tracking { time: f64, reason: String },
    #[error("singular curve: {0}")]
    SingularCurve(String),
    #[error("homology basis error: {0}")]
    Basis(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("path error: {0}")]
    Path(String),
    #[error("theta error: {0}")]
    Theta(String),
    #[error("linear algebra error: {0}")]
    LinearAlgebra(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
