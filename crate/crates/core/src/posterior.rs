use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::matops::{DenseMatrix, SymmetricFactor};

/// Which construction produced a posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Exact,
    Olr,
    LisBt,
    PdBt,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Exact => "Exact",
            Method::Olr => "OLR",
            Method::LisBt => "LisBT",
            Method::PdBt => "PdBT",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "exact" => Ok(Method::Exact),
            "olr" => Ok(Method::Olr),
            "lisbt" => Ok(Method::LisBt),
            "pdbt" => Ok(Method::PdBt),
            _ => Err(format!("unknown method `{s}` (expected OLR, LisBT or PdBT)")),
        }
    }
}

/// Gaussian posterior (exact or approximate) with its covariance in factored
/// form.
#[derive(Debug, Clone)]
pub struct PosteriorApprox {
    pub method: Method,
    pub rank_r: usize,
    pub mean: DVector<f64>,
    pub cov_factor: SymmetricFactor,
    pub diagnostics: BTreeMap<String, f64>,
}

impl PosteriorApprox {
    pub fn covariance(&self) -> DenseMatrix {
        self.cov_factor.to_dense()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}
