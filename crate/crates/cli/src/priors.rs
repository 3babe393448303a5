//! Rank-deficient prior generators and the compatibility diagnostic.

use std::path::Path;

use bayesbt_core::lti::reachability_gramian;
use bayesbt_core::matops::{norm2, real_schur, solve_lyapunov, sym_eig};
use bayesbt_core::{DenseMatrix, GaussianBelief, LtiSystem, SymmetricFactor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::mtx::read_mtx;

/// Largest eigenvalue of `A·Γ + Γ·Aᵀ`, absolute and relative to
/// `2·‖A‖₂·‖Γ‖₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Compatibility {
    pub max_eigenvalue: f64,
    pub relative: f64,
    pub compatible: bool,
}

/// Relative tolerance below which `A·Γ + Γ·Aᵀ ⪯ 0` is accepted.
pub const COMPATIBILITY_TOL: f64 = 1e-10;

pub fn compatibility(a: &DenseMatrix, prior: &SymmetricFactor) -> CliResult<Compatibility> {
    let gamma = prior.to_dense();
    let lyap = a * &gamma + &gamma * a.transpose();
    let lyap = (&lyap + lyap.transpose()) * 0.5;
    let max = if lyap.is_empty() { 0.0 } else { sym_eig(&lyap)?.vals[0] };
    let scale = 2.0 * norm2(a) * norm2(&gamma);
    let relative = if scale > 0.0 { max / scale } else { 0.0 };
    Ok(Compatibility {
        max_eigenvalue: max,
        relative,
        compatible: relative <= COMPATIBILITY_TOL,
    })
}

#[derive(Debug, Clone)]
pub struct PriorReport {
    pub belief: GaussianBelief,
    pub compatibility: Compatibility,
    /// Rank zero: the prior carries no uncertainty.
    pub degenerate: bool,
    pub note: String,
}

impl PriorReport {
    fn new(sys: &LtiSystem, factor: SymmetricFactor, note: String) -> CliResult<Self> {
        let compatibility = compatibility(sys.a(), &factor)?;
        let degenerate = factor.rank() == 0;
        if degenerate {
            log::warn!("generated prior has rank 0");
        }
        Ok(Self {
            belief: GaussianBelief::centered(factor),
            compatibility,
            degenerate,
            note,
        })
    }

    pub fn rank(&self) -> usize {
        self.belief.rank()
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut *rng))
}

/// Empirical covariance (`1/n` normalization, after centering) of `n_samples`
/// draws from `N(0, P)`, `A·P + P·Aᵀ = −B·Bᵀ`. Its rank is at most
/// `n_samples − 1`.
pub fn make_prior_incompatible(sys: &LtiSystem, n_samples: usize, seed: u64) -> CliResult<PriorReport> {
    if n_samples == 0 {
        return Err(CliError::Config("empirical prior needs at least one sample".into()));
    }
    let p = reachability_gramian(sys)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = gaussian(&mut rng, p.rank(), n_samples);
    let mut x = p.factor() * z;
    let mean = x.column_mean();
    for mut col in x.column_iter_mut() {
        col -= &mean;
    }
    let factor = SymmetricFactor::compress(&(x / (n_samples as f64).sqrt()))?;
    PriorReport::new(
        sys,
        factor,
        format!("empirical covariance of {n_samples} samples from the reachability Gramian, 1/n normalization"),
    )
}

/// Compatible prior of (about) `target_rank`: with the real Schur form
/// `A = U·T·Uᵀ` and `U_k` its leading `k` columns (an invariant subspace),
/// `Γ = U_k·P_k·U_kᵀ` where `T₁₁·P_k + P_k·T₁₁ᵀ = −G·Gᵀ` for a seeded
/// Gaussian `G`. Then `A·Γ + Γ·Aᵀ = −(U_k·G)(U_k·G)ᵀ ⪯ 0` exactly. When `k`
/// would split a complex-conjugate block it is raised by one.
pub fn make_prior_compatible(sys: &LtiSystem, target_rank: usize, seed: u64) -> CliResult<PriorReport> {
    sys.ensure_stable()?;
    let d = sys.dim();
    if target_rank > d {
        return Err(CliError::Config(format!(
            "prior rank {target_rank} exceeds state dimension {d}"
        )));
    }
    let schur = real_schur(sys.a())?;
    let mut k = target_rank;
    if schur.blocks().iter().any(|&(start, size)| size == 2 && start + 1 == k) {
        k += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = gaussian(&mut rng, k, k);
    let t11 = schur.quasi_triangular.view((0, 0), (k, k)).into_owned();
    let pk = solve_lyapunov(&t11, &SymmetricFactor::from_factor(g)?)?;
    let uk = schur.unitary.columns(0, k);
    let factor = SymmetricFactor::compress(&(uk * pk.factor()))?;
    let mut note = "invariant-subspace Lyapunov substitute for the compatible prior".to_string();
    if k != target_rank {
        note.push_str(&format!(
            "; rank raised from {target_rank} to {k} to keep a conjugate pair intact"
        ));
    }
    PriorReport::new(sys, factor, note)
}

/// Prior with covariance `F·Fᵀ` for a factor `F` read from a Matrix Market
/// file.
pub fn load_prior(sys: &LtiSystem, path: &Path) -> CliResult<PriorReport> {
    let f = read_mtx(path)?;
    if f.nrows() != sys.dim() {
        return Err(CliError::Config(format!(
            "prior factor has {} rows, system dimension is {}",
            f.nrows(),
            sys.dim()
        )));
    }
    PriorReport::new(
        sys,
        SymmetricFactor::compress(&f)?,
        format!("factor from {}", path.display()),
    )
}
