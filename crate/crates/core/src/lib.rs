//! Gaussian posterior approximation for linear Bayesian smoothing problems
//! with rank-deficient prior covariances.
//!
//! The crate is layered bottom-up:
//!
//! - [`matops`]: dense kernels (SVD, symmetric eigensolver, matrix
//!   exponential, Sylvester and Lyapunov solvers).
//! - [`lti`]: linear time-invariant systems, Gramians, square-root balancing
//!   and Petrov–Galerkin projection.
//! - [`smoother`]: priors, observation setups, forward maps, the exact
//!   posterior and the problem restricted to the range of the prior.
//! - [`reducers`]: optimal low-rank (OLR) dimension reduction,
//!   likelihood-informed balanced truncation (LIS-BT), prior-driven balanced
//!   truncation (PD-BT), the PD-BT error bounds, and comparison metrics.

pub mod error;
pub mod lti;
pub mod matops;
pub mod posterior;
pub mod reducers;
pub mod smoother;

pub use error::{Eigenvalue, Error, Result};
pub use lti::{BalancedBases, LtiSystem, ReducedLti};
pub use matops::{DenseMatrix, SymmetricFactor, RANK_TOL};
pub use posterior::{Method, PosteriorApprox};
pub use reducers::{BoundReport, LisBtReducer, OlrReducer, PdBtReducer};
pub use smoother::{ForwardMap, GaussianBelief, ObservationSetup, RestrictedProblem};
