use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain where the quantity is defined.
    #[error("{what} = {value} is outside the domain [{lo}, {hi})")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// A conformal factor that does not satisfy rho(0) = 1.
    #[error("conformal factor is not normalized: rho(0) = {rho0} (expected 1)")]
    Normalization { rho0: f64 },

    /// Evaluation at (or too close to) the prescribed singularity of a field.
    #[error("evaluation at distance {distance:e} from the singular point (minimum {min:e})")]
    Singular { distance: f64, min: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Quadrature, root finding or an iterative solver did not converge.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("no admissible radius found: {0}")]
    NoAdmissibleRadius(String),

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64, lo: f64, hi: f64) -> Self {
        Error::Domain { what, value, lo, hi }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
