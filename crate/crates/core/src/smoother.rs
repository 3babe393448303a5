//! The Bayesian smoothing problem: infer the initial state `p` of
//! `ẋ = A·x`, `y = C·x` from noisy samples `m_k = y(t_k) + ε_k`.
//!
//! Block-diagonal observation covariances are never assembled; every product
//! with `Γ_obs^{-1/2}` is applied per time block through the Cholesky factor of
//! the single-time noise covariance.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::lti::{self, balance_full, BalancedBases, LtiSystem};
use crate::matops::{cholesky_lower, sym_eig, DenseMatrix, SymmetricFactor};
use crate::posterior::{Method, PosteriorApprox};

/// Gaussian with covariance `cov_factor·cov_factorᵀ`.
#[derive(Debug, Clone)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov_factor: SymmetricFactor,
}

impl GaussianBelief {
    pub fn centered(cov_factor: SymmetricFactor) -> Self {
        Self {
            mean: DVector::zeros(cov_factor.dim()),
            cov_factor,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn rank(&self) -> usize {
        self.cov_factor.rank()
    }

    pub fn covariance(&self) -> DenseMatrix {
        self.cov_factor.to_dense()
    }

    pub(crate) fn ensure_centered(&self) -> Result<()> {
        if self.mean.iter().all(|&v| v == 0.0) {
            Ok(())
        } else {
            Err(Error::Invalid("non-zero prior means are not supported".into()))
        }
    }
}

/// Measurement times and the per-time noise covariance `Γ_ε`.
#[derive(Debug, Clone)]
pub struct ObservationSetup {
    times: Vec<f64>,
    noise_cov: DenseMatrix,
    noise_chol: DenseMatrix,
}

impl ObservationSetup {
    pub fn new(times: Vec<f64>, noise_cov: DenseMatrix) -> Result<Self> {
        lti::validate_times(&times)?;
        let noise_chol = cholesky_lower(&noise_cov, "noise covariance")?;
        Ok(Self {
            times,
            noise_cov,
            noise_chol,
        })
    }

    /// Times `step, 2·step, …` up to and including `end`.
    pub fn equidistant(step: f64, end: f64, noise_cov: DenseMatrix) -> Result<Self> {
        if !(step > 0.0 && end >= step) {
            return Err(Error::InvalidTimes);
        }
        let n = (end / step + 1e-9).floor() as usize;
        let times = (1..=n).map(|k| k as f64 * step).collect();
        Self::new(times, noise_cov)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn noise_cov(&self) -> &DenseMatrix {
        &self.noise_cov
    }

    /// Lower Cholesky factor of `Γ_ε`.
    pub fn noise_chol(&self) -> &DenseMatrix {
        &self.noise_chol
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn d_out(&self) -> usize {
        self.noise_cov.nrows()
    }

    pub fn d_obs(&self) -> usize {
        self.n_times() * self.d_out()
    }

    /// `Γ_obs^{-1/2}·M` for a matrix with `n·d_out` rows, applied blockwise.
    pub fn whiten(&self, m: &DenseMatrix) -> Result<DenseMatrix> {
        let q = self.d_out();
        if m.nrows() != self.d_obs() {
            return Err(Error::DimensionMismatch {
                op: "whiten",
                expected: format!("{} rows", self.d_obs()),
                found: format!("{}", m.nrows()),
            });
        }
        let mut out = DenseMatrix::zeros(m.nrows(), m.ncols());
        for k in 0..self.n_times() {
            let block = m.rows(k * q, q).into_owned();
            out.rows_mut(k * q, q)
                .copy_from(&lti::whiten_rows(&self.noise_chol, &block)?);
        }
        Ok(out)
    }

    pub fn whiten_vector(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let m = DenseMatrix::from_column_slice(v.len(), 1, v.as_slice());
        Ok(self.whiten(&m)?.column(0).into_owned())
    }
}

/// Stacked forward operator `G = [C·e^{A·t_1}; …; C·e^{A·t_n}]`, stored as
/// one block per measurement time.
#[derive(Debug, Clone)]
pub struct ForwardMap {
    blocks: Vec<DenseMatrix>,
    assembled: Option<DenseMatrix>,
}

impl ForwardMap {
    pub fn from_blocks(blocks: Vec<DenseMatrix>) -> Result<Self> {
        if let Some(first) = blocks.first() {
            let shape = first.shape();
            if let Some(bad) = blocks.iter().find(|b| b.shape() != shape) {
                return Err(Error::DimensionMismatch {
                    op: "ForwardMap",
                    expected: format!("{}x{} blocks", shape.0, shape.1),
                    found: format!("{}x{}", bad.nrows(), bad.ncols()),
                });
            }
        }
        let assembled = (!blocks.is_empty()).then(|| stack_rows(&blocks));
        Ok(Self { blocks, assembled })
    }

    pub fn blocks(&self) -> &[DenseMatrix] {
        &self.blocks
    }

    /// The stacked `(n·d_out)×d` matrix.
    pub fn assembled(&self) -> Option<&DenseMatrix> {
        self.assembled.as_ref()
    }

    fn stacked(&self) -> Result<&DenseMatrix> {
        self.assembled
            .as_ref()
            .ok_or_else(|| Error::Invalid("forward map has no blocks".into()))
    }

    pub fn dim(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.ncols())
    }

    /// Whitened operator `Γ_obs^{-1/2}·G`.
    pub fn whitened(&self, obs: &ObservationSetup) -> Result<DenseMatrix> {
        obs.whiten(self.stacked()?)
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.stacked()? * x)
    }
}

pub(crate) fn stack_rows(blocks: &[DenseMatrix]) -> DenseMatrix {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DenseMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.rows_mut(at, b.nrows()).copy_from(b);
        at += b.nrows();
    }
    out
}

/// `C·e^{A·t_k}` for every measurement time.
pub fn assemble_forward(sys: &LtiSystem, obs: &ObservationSetup) -> Result<ForwardMap> {
    if sys.b().is_some() {
        return Err(Error::Invalid(
            "forward map expects the unforced system (drop the input matrix)".into(),
        ));
    }
    check_outputs(sys, obs)?;
    ForwardMap::from_blocks(output_blocks(sys.a(), sys.c(), obs.times())?)
}

/// `C·e^{A·t_k}` by stepping the transition matrices.
pub(crate) fn output_blocks(a: &DenseMatrix, c: &DenseMatrix, times: &[f64]) -> Result<Vec<DenseMatrix>> {
    let mut blocks = Vec::with_capacity(times.len());
    let mut current = c.clone();
    lti::for_each_transition(a, times, |_, phi| {
        current = &current * phi;
        blocks.push(current.clone());
    })?;
    Ok(blocks)
}

fn check_outputs(sys: &LtiSystem, obs: &ObservationSetup) -> Result<()> {
    if sys.d_out() != obs.d_out() {
        return Err(Error::DimensionMismatch {
            op: "observation setup",
            expected: format!("{} outputs", sys.d_out()),
            found: format!("{}", obs.d_out()),
        });
    }
    Ok(())
}

/// Conditioning of a centered prior `N(0, L·Lᵀ)` on whitened data
/// `m̃ = M̃·z + ξ`, `ξ ~ N(0, I)`, where `M̃ = Γ_obs^{-1/2}·G·L`.
///
/// With the thin QR factorization `[M̃; I] = Q·R`, the posterior covariance
/// factor is `L·R⁻¹` and the mean is `L·R⁻¹·Q_topᵀ·m̃`. This is the downdate
/// `Γ_pr − Γ_pr·Gᵀ(Γ_obs + G·Γ_pr·Gᵀ)⁻¹·G·Γ_pr` evaluated without forming
/// any difference of near-equal matrices.
#[derive(Debug, Clone)]
pub struct LinearGaussianUpdate {
    prior_factor: DenseMatrix,
    post_factor: DenseMatrix,
    gain: DenseMatrix,
}

impl LinearGaussianUpdate {
    pub fn new(prior_factor: &DenseMatrix, whitened_m: &DenseMatrix) -> Result<Self> {
        let (d, s) = prior_factor.shape();
        let n = whitened_m.nrows();
        if whitened_m.ncols() != s {
            return Err(Error::DimensionMismatch {
                op: "LinearGaussianUpdate",
                expected: format!("{s} columns"),
                found: format!("{}", whitened_m.ncols()),
            });
        }
        if s == 0 {
            return Ok(Self {
                prior_factor: prior_factor.clone(),
                post_factor: DenseMatrix::zeros(d, 0),
                gain: DenseMatrix::zeros(0, n),
            });
        }
        let mut stacked = DenseMatrix::zeros(n + s, s);
        stacked.rows_mut(0, n).copy_from(whitened_m);
        stacked.rows_mut(n, s).fill_with_identity();
        let qr = stacked.qr();
        let r = qr.r();
        let q = qr.q();
        let singular = || Error::Invalid("innovation system is singular".into());
        // post_factorᵀ = R⁻ᵀ·Lᵀ
        let post_t = r
            .transpose()
            .solve_lower_triangular(&prior_factor.transpose())
            .ok_or_else(singular)?;
        let gain = r
            .solve_upper_triangular(&q.rows(0, n).transpose())
            .ok_or_else(singular)?;
        Ok(Self {
            prior_factor: prior_factor.clone(),
            post_factor: post_t.transpose(),
            gain,
        })
    }

    pub fn cov_factor(&self) -> &DenseMatrix {
        &self.post_factor
    }

    /// Posterior mean for whitened data.
    pub fn mean(&self, whitened_data: &DVector<f64>) -> DVector<f64> {
        &self.prior_factor * (&self.gain * whitened_data)
    }

    pub fn posterior(&self, method: Method, rank_r: usize, whitened_data: &DVector<f64>) -> PosteriorApprox {
        PosteriorApprox {
            method,
            rank_r,
            mean: self.mean(whitened_data),
            cov_factor: SymmetricFactor::from_factor(self.post_factor.clone()).expect("posterior factor is finite"),
            diagnostics: BTreeMap::new(),
        }
    }
}

/// Exact Gaussian posterior of `m = G·p + ε`.
pub fn exact_posterior(
    prior: &GaussianBelief,
    fwd: &ForwardMap,
    obs: &ObservationSetup,
    data: &DVector<f64>,
) -> Result<PosteriorApprox> {
    prior.ensure_centered()?;
    check_data(obs, data)?;
    let l = prior.cov_factor.factor();
    let m = fwd.whitened(obs)? * l;
    let update = LinearGaussianUpdate::new(l, &m)?;
    Ok(update.posterior(Method::Exact, prior.rank(), &obs.whiten_vector(data)?))
}

pub(crate) fn check_data(obs: &ObservationSetup, data: &DVector<f64>) -> Result<()> {
    if data.len() != obs.d_obs() {
        return Err(Error::DimensionMismatch {
            op: "data",
            expected: format!("{} entries", obs.d_obs()),
            found: format!("{}", data.len()),
        });
    }
    Ok(())
}

/// The inverse problem restricted to `Ran(Γ_pr)`: `p̂ = V_sᵀ·p`,
/// `Ĝ = G·W_s`, with restricted prior covariance `diag(σ)`.
#[derive(Debug, Clone)]
pub struct RestrictedProblem {
    pub g_hat: ForwardMap,
    pub prior_diag: Vec<f64>,
    pub bases: BalancedBases,
    /// Rank of the prior; larger than `bases.rank()` when the data do not
    /// inform every prior direction.
    pub requested_rank: usize,
}

impl RestrictedProblem {
    pub fn rank(&self) -> usize {
        self.prior_diag.len()
    }

    pub fn is_rank_reduced(&self) -> bool {
        self.rank() < self.requested_rank
    }

    pub fn prior(&self) -> GaussianBelief {
        let roots = DVector::from_iterator(self.rank(), self.prior_diag.iter().map(|s| s.sqrt()));
        GaussianBelief::centered(
            SymmetricFactor::from_factor(DenseMatrix::from_diagonal(&roots)).expect("finite restricted prior"),
        )
    }

    /// Exact restricted posterior `(μ̂, Γ̂)`.
    pub fn posterior(&self, obs: &ObservationSetup, data: &DVector<f64>) -> Result<(DVector<f64>, DenseMatrix)> {
        let post = exact_posterior(&self.prior(), &self.g_hat, obs, data)?;
        Ok((post.mean.clone(), post.covariance()))
    }

    /// `V_sᵀ·x`.
    pub fn restrict_vector(&self, x: &DVector<f64>) -> DVector<f64> {
        self.bases.v.transpose() * x
    }

    /// `V_sᵀ·F`, a factor of `V_sᵀ·F·Fᵀ·V_s`.
    pub fn restrict_factor(&self, factor: &DenseMatrix) -> DenseMatrix {
        self.bases.v.transpose() * factor
    }
}

pub fn build_restricted(prior: &GaussianBelief, fwd: &ForwardMap, obs: &ObservationSetup) -> Result<RestrictedProblem> {
    let fisher = SymmetricFactor::from_factor(fwd.whitened(obs)?.transpose())?;
    let full = balance_full(&prior.cov_factor, &fisher)?;
    let s = prior.rank();
    let bases = full.truncate(full.rank().min(s))?;
    let g_hat = ForwardMap::from_blocks(fwd.blocks().iter().map(|b| b * &bases.w).collect())?;
    Ok(RestrictedProblem {
        g_hat,
        prior_diag: bases.sigma.clone(),
        bases,
        requested_rank: s,
    })
}

/// `W_s·μ̂` and a factor of `W_s·Γ̂·W_sᵀ`.
pub fn lift_restricted(
    rp: &RestrictedProblem,
    mean_hat: &DVector<f64>,
    cov_hat: &DenseMatrix,
) -> Result<PosteriorApprox> {
    let s = rp.rank();
    if mean_hat.len() != s || cov_hat.shape() != (s, s) {
        return Err(Error::DimensionMismatch {
            op: "lift_restricted",
            expected: format!("dimension {s}"),
            found: format!("{} / {}x{}", mean_hat.len(), cov_hat.nrows(), cov_hat.ncols()),
        });
    }
    let inner = SymmetricFactor::from_psd(cov_hat)?;
    Ok(PosteriorApprox {
        method: Method::Exact,
        rank_r: s,
        mean: &rp.bases.w * mean_hat,
        cov_factor: SymmetricFactor::from_factor(&rp.bases.w * inner.factor())?,
        diagnostics: BTreeMap::new(),
    })
}

/// Förstner distance `sqrt(Σ ln² λ_i)` over the generalized eigenvalues of
/// the SPD pencil `(e, f)`.
pub fn forstner_distance(e: &DenseMatrix, f: &DenseMatrix) -> Result<f64> {
    if e.shape() != f.shape() {
        return Err(Error::DimensionMismatch {
            op: "forstner_distance",
            expected: format!("{}x{}", f.nrows(), f.ncols()),
            found: format!("{}x{}", e.nrows(), e.ncols()),
        });
    }
    cholesky_lower(e, "Förstner argument")?;
    let lf = cholesky_lower(f, "Förstner argument")?;
    let not_pd = || Error::NotPositiveDefinite {
        what: "Förstner argument",
    };
    // L⁻¹·E·L⁻ᵀ
    let half = lf.solve_lower_triangular(e).ok_or_else(not_pd)?;
    let sim = lf.solve_lower_triangular(&half.transpose()).ok_or_else(not_pd)?;
    let sim = (&sim + sim.transpose()) * 0.5;
    let eig = sym_eig(&sim)?;
    let mut acc = 0.0;
    for &lambda in eig.vals.iter() {
        if lambda <= 0.0 {
            return Err(not_pd());
        }
        acc += lambda.ln().powi(2);
    }
    Ok(acc.sqrt())
}

/// `xᵀ·M⁻¹·x` for SPD `M`.
pub fn mahalanobis_sq(x: &DVector<f64>, cov: &DenseMatrix) -> Result<f64> {
    if cov.shape() != (x.len(), x.len()) {
        return Err(Error::DimensionMismatch {
            op: "mahalanobis_sq",
            expected: format!("{0}x{0}", x.len()),
            found: format!("{}x{}", cov.nrows(), cov.ncols()),
        });
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let l = cholesky_lower(cov, "Mahalanobis weight")?;
    let y = l.solve_lower_triangular(x).ok_or(Error::NotPositiveDefinite {
        what: "Mahalanobis weight",
    })?;
    Ok(y.norm_squared())
}

pub(crate) fn standard_normals(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

/// `mean + L·z` with `z ~ N(0, I_s)`, deterministic per seed.
pub fn sample_prior(prior: &GaussianBelief, rng_seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let z = standard_normals(&mut rng, prior.rank());
    &prior.mean + prior.cov_factor.factor() * z
}

/// Outputs `C·e^{A·t_k}·truth` stacked by time, plus `N(0, Γ_ε)` noise per
/// time unless `noise_free` is set.
pub fn generate_data(
    sys: &LtiSystem,
    obs: &ObservationSetup,
    truth: &DVector<f64>,
    rng_seed: u64,
    noise_free: bool,
) -> Result<DVector<f64>> {
    check_outputs(sys, obs)?;
    let outputs = lti::simulate_unforced(sys, truth, obs.times())?;
    let q = obs.d_out();
    let mut data = DVector::zeros(obs.d_obs());
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for k in 0..obs.n_times() {
        let mut y = outputs.row(k).transpose();
        if !noise_free {
            y += obs.noise_chol() * standard_normals(&mut rng, q);
        }
        data.rows_mut(k * q, q).copy_from(&y);
    }
    Ok(data)
}
