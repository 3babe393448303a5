//! Low-rank posterior approximations: optimal low-rank updates (OLR),
//! likelihood-informed balanced truncation (LIS-BT) and prior-driven balanced
//! truncation (PD-BT), plus the PD-BT error bounds and comparison metrics.
//!
//! Each method replaces `G` by a rank-`r` operator `G_r = F_r·V_rᵀ` and
//! conditions the prior through [`LinearGaussianUpdate`]. The reducers do the
//! expensive setup (Gramians, balancing) once and can then be queried at any
//! rank.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::lti::{self, balance_full, balance_full_tol, BalancedBases, LtiSystem, ReducedLti, GRAMIAN_RANK_TOL};
use crate::matops::{solve_lyapunov, solve_sylvester, svd, DenseMatrix, Svd, SymmetricFactor};
use crate::posterior::{Method, PosteriorApprox};
use crate::smoother::{
    check_data, forstner_distance, mahalanobis_sq, output_blocks, stack_rows, ForwardMap, GaussianBelief,
    LinearGaussianUpdate, ObservationSetup, RestrictedProblem,
};

/// A method fixed at one rank: the whitened reduced forward map
/// `F_r = Γ_obs^{-1/2}·G_r·W_r` and test basis `V_r`, so that
/// `Γ_obs^{-1/2}·G_r = F_r·V_rᵀ`, plus the conditioning it induces.
#[derive(Debug, Clone)]
pub struct RankUpdate {
    method: Method,
    rank_r: usize,
    reduced_forward: DenseMatrix,
    v_r: DenseMatrix,
    update: LinearGaussianUpdate,
}

impl RankUpdate {
    fn new(method: Method, prior: &GaussianBelief, reduced_forward: DenseMatrix, v_r: DenseMatrix) -> Result<Self> {
        let m = &reduced_forward * (v_r.transpose() * prior.cov_factor.factor());
        Self::with_map(method, prior, reduced_forward, v_r, m)
    }

    /// As [`RankUpdate::new`] with `F_r·V_rᵀ·L_pr` supplied by the caller.
    fn with_map(
        method: Method,
        prior: &GaussianBelief,
        reduced_forward: DenseMatrix,
        v_r: DenseMatrix,
        m: DenseMatrix,
    ) -> Result<Self> {
        let update = LinearGaussianUpdate::new(prior.cov_factor.factor(), &m)?;
        Ok(Self {
            method,
            rank_r: v_r.ncols(),
            reduced_forward,
            v_r,
            update,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn rank(&self) -> usize {
        self.rank_r
    }

    /// Posterior for data already whitened by `Γ_obs^{-1/2}`.
    pub fn posterior(&self, whitened_data: &DVector<f64>) -> PosteriorApprox {
        self.update.posterior(self.method, self.rank_r, whitened_data)
    }

    /// `Γ_obs^{-1/2}·G_r·p`.
    pub fn whitened_output(&self, p: &DVector<f64>) -> DVector<f64> {
        &self.reduced_forward * (self.v_r.transpose() * p)
    }

    /// `‖Y − Y_r‖²` in the `Γ_obs^{-1}` norm, given the whitened full-order
    /// output `Γ_obs^{-1/2}·G·p`.
    pub fn output_error_sq(&self, whitened_full_output: &DVector<f64>, p: &DVector<f64>) -> f64 {
        (whitened_full_output - self.whitened_output(p)).norm_squared()
    }
}

/// Optimal low-rank update: `G_OLR = G·W_r·V_rᵀ` with bases balancing the
/// prior covariance against the Fisher information.
#[derive(Debug, Clone)]
pub struct OlrReducer {
    prior: GaussianBelief,
    obs: ObservationSetup,
    whitened_g: DenseMatrix,
    bases: BalancedBases,
    /// SVD of `Γ_obs^{-1/2}·G·L_pr`, whose rank-`r` truncation is
    /// `Γ_obs^{-1/2}·G_OLR·L_pr`.
    whitened_gl: Svd,
}

impl OlrReducer {
    pub fn new(prior: &GaussianBelief, fwd: &ForwardMap, obs: &ObservationSetup) -> Result<Self> {
        prior.ensure_centered()?;
        check_dim(prior, fwd.dim())?;
        let whitened_g = fwd.whitened(obs)?;
        let fisher = SymmetricFactor::from_factor(whitened_g.transpose())?;
        let bases = balance_full(&prior.cov_factor, &fisher)?;
        let whitened_gl = svd(&(&whitened_g * prior.cov_factor.factor()))?;
        Ok(Self {
            prior: prior.clone(),
            obs: obs.clone(),
            whitened_g,
            bases,
            whitened_gl,
        })
    }

    pub fn attainable_rank(&self) -> usize {
        self.bases.rank()
    }

    pub fn bases(&self) -> &BalancedBases {
        &self.bases
    }

    pub fn rank_update(&self, r: usize) -> Result<RankUpdate> {
        let b = self.bases.truncate(r)?;
        let dec = &self.whitened_gl;
        let m = dec.u.columns(0, r) * DenseMatrix::from_diagonal(&dec.s.rows(0, r)) * dec.vt.rows(0, r);
        RankUpdate::with_map(Method::Olr, &self.prior, &self.whitened_g * &b.w, b.v, m)
    }

    pub fn posterior(&self, data: &DVector<f64>, r: usize) -> Result<PosteriorApprox> {
        posterior_at(&self.rank_update(r)?, &self.obs, data)
    }
}

/// Likelihood-informed balanced truncation: balances the prior covariance
/// against the noise-weighted observability Gramian.
#[derive(Debug, Clone)]
pub struct LisBtReducer {
    sys: LtiSystem,
    prior: GaussianBelief,
    obs: ObservationSetup,
    bases: BalancedBases,
}

impl LisBtReducer {
    pub fn new(sys: &LtiSystem, prior: &GaussianBelief, obs: &ObservationSetup) -> Result<Self> {
        prior.ensure_centered()?;
        check_dim(prior, sys.dim())?;
        let q = lti::observability_gramian_weighted(sys, obs.noise_cov())?;
        let bases = balance_full_tol(&prior.cov_factor, &q, GRAMIAN_RANK_TOL)?;
        Ok(Self {
            sys: sys.without_input(),
            prior: prior.clone(),
            obs: obs.clone(),
            bases,
        })
    }

    pub fn attainable_rank(&self) -> usize {
        self.bases.rank()
    }

    pub fn bases(&self) -> &BalancedBases {
        &self.bases
    }

    pub fn reduce(&self, r: usize) -> Result<ReducedLti> {
        lti::project(&self.sys, &self.bases.truncate(r)?)
    }

    pub fn rank_update(&self, r: usize) -> Result<RankUpdate> {
        let red = self.reduce(r)?;
        let f = reduced_forward(&red, &self.obs)?;
        RankUpdate::new(Method::LisBt, &self.prior, f, red.bases.v)
    }

    pub fn posterior(&self, data: &DVector<f64>, r: usize) -> Result<PosteriorApprox> {
        posterior_at(&self.rank_update(r)?, &self.obs, data)
    }
}

/// Prior-driven balanced truncation: balances the reachability Gramian of the
/// prior-driven system `(A, L_pr, C)` against the noise-weighted
/// observability Gramian.
#[derive(Debug, Clone)]
pub struct PdBtReducer {
    pd_sys: LtiSystem,
    prior: GaussianBelief,
    obs: ObservationSetup,
    q: SymmetricFactor,
    bases: BalancedBases,
}

impl PdBtReducer {
    pub fn new(sys: &LtiSystem, prior: &GaussianBelief, obs: &ObservationSetup) -> Result<Self> {
        prior.ensure_centered()?;
        check_dim(prior, sys.dim())?;
        let pd_sys = LtiSystem::new(
            sys.a().clone(),
            sys.c().clone(),
            Some(prior.cov_factor.factor().clone()),
        )?;
        let p = lti::reachability_gramian(&pd_sys)?;
        let q = lti::observability_gramian_weighted(sys, obs.noise_cov())?;
        let bases = balance_full_tol(&p, &q, GRAMIAN_RANK_TOL)?;
        Ok(Self {
            pd_sys,
            prior: prior.clone(),
            obs: obs.clone(),
            q,
            bases,
        })
    }

    pub fn attainable_rank(&self) -> usize {
        self.bases.rank()
    }

    pub fn bases(&self) -> &BalancedBases {
        &self.bases
    }

    /// Reduced prior-driven system; `b_r = V_rᵀ·L_pr`.
    pub fn reduce(&self, r: usize) -> Result<ReducedLti> {
        lti::project(&self.pd_sys, &self.bases.truncate(r)?)
    }

    pub fn rank_update(&self, r: usize) -> Result<RankUpdate> {
        let red = self.reduce(r)?;
        let f = reduced_forward(&red, &self.obs)?;
        RankUpdate::new(Method::PdBt, &self.prior, f, red.bases.v)
    }

    pub fn posterior(&self, data: &DVector<f64>, r: usize) -> Result<PosteriorApprox> {
        posterior_at(&self.rank_update(r)?, &self.obs, data)
    }

    pub fn bounds(&self, r: usize) -> Result<BoundReport> {
        let red = self.reduce(r)?;
        bounds_impl(&self.pd_sys, &self.q, &self.obs, &red, &self.bases)
    }
}

fn check_dim(prior: &GaussianBelief, d: usize) -> Result<()> {
    if prior.dim() != d {
        return Err(Error::DimensionMismatch {
            op: "prior",
            expected: format!("dimension {d}"),
            found: format!("{}", prior.dim()),
        });
    }
    Ok(())
}

fn posterior_at(update: &RankUpdate, obs: &ObservationSetup, data: &DVector<f64>) -> Result<PosteriorApprox> {
    check_data(obs, data)?;
    Ok(update.posterior(&obs.whiten_vector(data)?))
}

/// Whitened `[C_r·e^{A_r·t_k}]_k`, evolved in the reduced space only.
fn reduced_forward(red: &ReducedLti, obs: &ObservationSetup) -> Result<DenseMatrix> {
    let r = red.rank();
    if r == 0 {
        return Ok(DenseMatrix::zeros(obs.d_obs(), 0));
    }
    let blocks = output_blocks(&red.a_r, &red.c_r, obs.times())?;
    obs.whiten(&stack_rows(&blocks))
}

pub fn olr_posterior(
    prior: &GaussianBelief,
    fwd: &ForwardMap,
    obs: &ObservationSetup,
    data: &DVector<f64>,
    r: usize,
) -> Result<PosteriorApprox> {
    OlrReducer::new(prior, fwd, obs)?.posterior(data, r)
}

pub fn lis_bt_posterior(
    sys: &LtiSystem,
    prior: &GaussianBelief,
    obs: &ObservationSetup,
    data: &DVector<f64>,
    r: usize,
) -> Result<PosteriorApprox> {
    LisBtReducer::new(sys, prior, obs)?.posterior(data, r)
}

pub fn pd_bt_posterior(
    sys: &LtiSystem,
    prior: &GaussianBelief,
    obs: &ObservationSetup,
    data: &DVector<f64>,
    r: usize,
) -> Result<PosteriorApprox> {
    PdBtReducer::new(sys, prior, obs)?.posterior(data, r)
}

/// PD-BT error bounds at one rank.
///
/// `h(t) = Γ_ε^{-1/2}·C·e^{A·t}·L_pr` is the whitened impulse response of the
/// prior-driven system and `h_r` its reduced counterpart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    /// `2·√s·Σ_{k>r} σ_k`.
    pub hankel_tail: f64,
    /// `trace[(L̄·L̄ᵀ + 2·S̄·Ā)·Σ̄]`, an upper bound on `‖h − h_r‖²_{L₂}`.
    pub inhom_trace_bound: f64,
    /// `s·κ̂·inhom_trace_bound`.
    pub expected_output_error_bound: f64,
    /// `Σ_k ‖h(t_k) − h_r(t_k)‖²_F / ‖h − h_r‖²_{L₂}`.
    pub kappa_estimate: f64,
    /// `‖h − h_r‖²_{L₂}` from the Gramian identity.
    pub impulse_error_l2_sq: f64,
    /// `Σ_k ‖h(t_k) − h_r(t_k)‖²_F`, which equals `E_p ‖Y − Y_r‖²_{Γ_obs^{-1}}`.
    pub sampled_impulse_error_sq: f64,
}

impl BoundReport {
    pub fn zero() -> Self {
        Self {
            hankel_tail: 0.0,
            inhom_trace_bound: 0.0,
            expected_output_error_bound: 0.0,
            kappa_estimate: 0.0,
            impulse_error_l2_sq: 0.0,
            sampled_impulse_error_sq: 0.0,
        }
    }
}

/// Bounds for a reduced prior-driven system. `full` are the balancing bases
/// at the attainable rank; their trailing columns past `reduced.rank()` span
/// the truncated complement.
pub fn pd_bt_bounds(
    sys: &LtiSystem,
    prior: &GaussianBelief,
    obs: &ObservationSetup,
    reduced: &ReducedLti,
    full: &BalancedBases,
) -> Result<BoundReport> {
    check_dim(prior, sys.dim())?;
    let pd_sys = LtiSystem::new(
        sys.a().clone(),
        sys.c().clone(),
        Some(prior.cov_factor.factor().clone()),
    )?;
    let q = lti::observability_gramian_weighted(sys, obs.noise_cov())?;
    bounds_impl(&pd_sys, &q, obs, reduced, full)
}

fn bounds_impl(
    pd_sys: &LtiSystem,
    q: &SymmetricFactor,
    obs: &ObservationSetup,
    reduced: &ReducedLti,
    full: &BalancedBases,
) -> Result<BoundReport> {
    let r = reduced.rank();
    if r > full.rank() {
        return Err(Error::RankExceeded {
            requested: r,
            attainable: full.rank(),
        });
    }
    let l = pd_sys.b().expect("prior-driven system carries L_pr");
    let s = l.ncols();
    let a = pd_sys.a();
    let (w_bar, v_bar, sigma_bar) = full.trailing(r);

    let cw = lti::whiten_rows(obs.noise_chol(), pd_sys.c())?;
    let cw_r = &cw * &reduced.bases.w;
    let l_r = reduced.bases.v.transpose() * l;

    // Aᵀ·S + S·A_r + Cᵀ·Γ_ε⁻¹·C_r = 0
    let s_mat = solve_sylvester(&a.transpose(), &reduced.a_r, &(cw.transpose() * &cw_r))?;
    let s_bar = w_bar.transpose() * &s_mat;
    let a_bar = reduced.bases.v.transpose() * a * &w_bar;
    let l_bar = v_bar.transpose() * l;
    let coupling = &s_bar * &a_bar;
    let trace: f64 = sigma_bar
        .iter()
        .enumerate()
        .map(|(i, &sig)| (l_bar.row(i).norm_squared() + 2.0 * coupling[(i, i)]) * sig)
        .sum();
    let hankel_tail = 2.0 * (s as f64).sqrt() * sigma_bar.iter().sum::<f64>();

    // ‖h − h_r‖² = tr(Lᵀ·Q·L) − 2·tr(Lᵀ·S·L_r) + tr(L_rᵀ·Q_r·L_r)
    let full_energy = (q.factor().transpose() * l).norm_squared();
    let cross = (l.transpose() * &s_mat * &l_r).trace();
    let reduced_energy = if r == 0 {
        0.0
    } else {
        let q_r = solve_lyapunov(
            &reduced.a_r.transpose(),
            &SymmetricFactor::from_factor(cw_r.transpose())?,
        )?;
        (q_r.factor().transpose() * &l_r).norm_squared()
    };
    let l2 = (full_energy - 2.0 * cross + reduced_energy).max(0.0);

    let sampled = sampled_impulse_error(a, &cw, l, reduced, &cw_r, &l_r, obs.times())?;
    let kappa = if l2 > 0.0 { sampled / l2 } else { 0.0 };
    let trace = trace.max(0.0);
    Ok(BoundReport {
        hankel_tail,
        inhom_trace_bound: trace,
        expected_output_error_bound: s as f64 * kappa * trace,
        kappa_estimate: kappa,
        impulse_error_l2_sq: l2,
        sampled_impulse_error_sq: sampled,
    })
}

fn sampled_impulse_error(
    a: &DenseMatrix,
    cw: &DenseMatrix,
    l: &DenseMatrix,
    reduced: &ReducedLti,
    cw_r: &DenseMatrix,
    l_r: &DenseMatrix,
    times: &[f64],
) -> Result<f64> {
    let full: Vec<DenseMatrix> = output_blocks(a, cw, times)?.into_iter().map(|b| b * l).collect();
    let mut acc = 0.0;
    if reduced.rank() == 0 {
        for h in &full {
            acc += h.norm_squared();
        }
        return Ok(acc);
    }
    // C_r·e^{A_r·t}·L_r via the reduced state propagated from L_r.
    let mut x_r = l_r.clone();
    let mut k_seen = 0;
    lti::for_each_transition(&reduced.a_r, times, |k, phi| {
        x_r = phi * &x_r;
        acc += (&full[k] - cw_r * &x_r).norm_squared();
        k_seen = k + 1;
    })?;
    debug_assert_eq!(k_seen, full.len());
    Ok(acc)
}

/// Restricted comparison of an approximation against the exact restricted
/// posterior. `forstner` is `None` when `V_sᵀ·Γ_approx·V_s` is not SPD.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedMetrics {
    pub forstner: Option<f64>,
    pub mahalanobis_sq: f64,
}

pub fn restricted_metrics(
    rp: &RestrictedProblem,
    approx: &PosteriorApprox,
    exact_restricted: (&DVector<f64>, &DenseMatrix),
) -> Result<RestrictedMetrics> {
    let (mean_hat, cov_hat) = exact_restricted;
    let approx_factor = rp.restrict_factor(approx.cov_factor.factor());
    let approx_cov = &approx_factor * approx_factor.transpose();
    let forstner = forstner_distance(cov_hat, &approx_cov).ok();
    let diff = mean_hat - rp.restrict_vector(&approx.mean);
    Ok(RestrictedMetrics {
        forstner,
        mahalanobis_sq: mahalanobis_sq(&diff, cov_hat)?,
    })
}

/// Full-space comparison. When the exact mean is zero the mean error is
/// reported as the absolute `‖μ_a‖²` and `mse_is_absolute` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullspaceMetrics {
    pub rel_frobenius: f64,
    pub rel_mse: f64,
    pub mse_is_absolute: bool,
}

pub fn fullspace_metrics(exact: &PosteriorApprox, approx: &PosteriorApprox) -> Result<FullspaceMetrics> {
    if exact.dim() != approx.dim() {
        return Err(Error::DimensionMismatch {
            op: "fullspace_metrics",
            expected: format!("dimension {}", exact.dim()),
            found: format!("{}", approx.dim()),
        });
    }
    let ce = exact.covariance();
    let ca = approx.covariance();
    let denom = ce.norm();
    let rel_frobenius = if denom > 0.0 {
        (&ca - &ce).norm() / denom
    } else {
        (&ca - &ce).norm()
    };
    let err = (&approx.mean - &exact.mean).norm_squared();
    let scale = exact.mean.norm_squared();
    let mse_is_absolute = scale == 0.0;
    Ok(FullspaceMetrics {
        rel_frobenius,
        rel_mse: if mse_is_absolute { err } else { err / scale },
        mse_is_absolute,
    })
}
