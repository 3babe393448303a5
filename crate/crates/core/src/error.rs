use std::fmt;

/// A complex eigenvalue, reported in diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

impl fmt::Display for Eigenvalue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im == 0.0 {
            write!(f, "{:e}", self.re)
        } else {
            write!(f, "{:e}{:+e}i", self.re, self.im)
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: dimension mismatch, expected {expected}, found {found}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("{what}: matrix contains non-finite entries")]
    NonFinite { what: &'static str },

    #[error("{op}: matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { op: &'static str, asymmetry: f64 },

    #[error("{what}: matrix is not positive definite")]
    NotPositiveDefinite { what: &'static str },

    #[error("{op}: iteration did not converge")]
    NonConvergence { op: &'static str },

    #[error("matrix exponential overflow: ‖A·t‖₁ = {norm:e}")]
    Overflow { norm: f64 },

    #[error("Sylvester equation is singular: spectra of A and -B overlap (gap {gap:e})")]
    SingularEquation { gap: f64 },

    #[error("system is not stable: eigenvalue {eigenvalue} has non-negative real part")]
    Unstable { eigenvalue: Eigenvalue },

    #[error("requested rank {requested} exceeds the attainable numerical rank {attainable}")]
    RankExceeded { requested: usize, attainable: usize },

    #[error("observation times must be positive and strictly increasing")]
    InvalidTimes,

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
