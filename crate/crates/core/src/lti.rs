//! Linear time-invariant systems `ẋ = A·x + B·u`, `y = C·x`: simulation,
//! Gramians, square-root balancing and Petrov–Galerkin projection.

use nalgebra::DVector;

use crate::error::{Eigenvalue, Error, Result};
use crate::matops::{
    self, cholesky_lower, ensure_finite, numerical_rank, solve_lyapunov, svd, DenseMatrix, SymmetricFactor, RANK_TOL,
};

/// State-space system. `b` is absent for the unforced smoothing dynamics.
#[derive(Debug, Clone)]
pub struct LtiSystem {
    a: DenseMatrix,
    c: DenseMatrix,
    b: Option<DenseMatrix>,
    eigenvalues: Vec<Eigenvalue>,
    norm_a: f64,
}

impl LtiSystem {
    pub fn new(a: DenseMatrix, c: DenseMatrix, b: Option<DenseMatrix>) -> Result<Self> {
        ensure_finite(&a, "system matrix A")?;
        ensure_finite(&c, "output matrix C")?;
        let d = a.nrows();
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                op: "LtiSystem::new",
                expected: "square A".into(),
                found: format!("{}x{}", a.nrows(), a.ncols()),
            });
        }
        if c.ncols() != d {
            return Err(Error::DimensionMismatch {
                op: "LtiSystem::new",
                expected: format!("C with {d} columns"),
                found: format!("{}x{}", c.nrows(), c.ncols()),
            });
        }
        if let Some(b) = &b {
            ensure_finite(b, "input matrix B")?;
            if b.nrows() != d {
                return Err(Error::DimensionMismatch {
                    op: "LtiSystem::new",
                    expected: format!("B with {d} rows"),
                    found: format!("{}x{}", b.nrows(), b.ncols()),
                });
            }
        }
        let eigenvalues = matops::spectrum(&a)?;
        let norm_a = matops::norm2(&a);
        Ok(Self {
            a,
            c,
            b,
            eigenvalues,
            norm_a,
        })
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn c(&self) -> &DenseMatrix {
        &self.c
    }

    pub fn b(&self) -> Option<&DenseMatrix> {
        self.b.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.c.nrows()
    }

    pub fn eigenvalues(&self) -> &[Eigenvalue] {
        &self.eigenvalues
    }

    /// Largest real part over the spectrum of `A`.
    pub fn spectral_abscissa(&self) -> f64 {
        self.eigenvalues.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Stable when every eigenvalue has real part below `−1e-12·‖A‖₂`.
    pub fn is_stable(&self) -> bool {
        self.ensure_stable().is_ok()
    }

    pub fn ensure_stable(&self) -> Result<()> {
        match self.eigenvalues.iter().copied().max_by(|x, y| x.re.total_cmp(&y.re)) {
            Some(worst) if worst.re >= -1e-12 * self.norm_a => Err(Error::Unstable { eigenvalue: worst }),
            _ => Ok(()),
        }
    }

    /// Same dynamics and output with the input port dropped.
    pub fn without_input(&self) -> Self {
        Self {
            b: None,
            ..self.clone()
        }
    }
}

/// Left/right balancing bases with `Vᵀ·W = I` and
/// `Wᵀ·Q·W = Vᵀ·P·V = diag(sigma)`.
#[derive(Debug, Clone)]
pub struct BalancedBases {
    pub w: DenseMatrix,
    pub v: DenseMatrix,
    pub sigma: Vec<f64>,
}

impl BalancedBases {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Leading `r` columns.
    pub fn truncate(&self, r: usize) -> Result<Self> {
        if r > self.rank() {
            return Err(Error::RankExceeded {
                requested: r,
                attainable: self.rank(),
            });
        }
        Ok(Self {
            w: self.w.columns(0, r).into_owned(),
            v: self.v.columns(0, r).into_owned(),
            sigma: self.sigma[..r].to_vec(),
        })
    }

    /// Oblique projector `W·Vᵀ`.
    pub fn projector(&self) -> DenseMatrix {
        &self.w * self.v.transpose()
    }

    /// Columns `r..` of the bases and the matching values.
    pub fn trailing(&self, r: usize) -> (DenseMatrix, DenseMatrix, &[f64]) {
        let k = self.rank() - r;
        (
            self.w.columns(r, k).into_owned(),
            self.v.columns(r, k).into_owned(),
            &self.sigma[r..],
        )
    }
}

/// Square-root balancing of `P = L·Lᵀ`, `Q = R·Rᵀ` at every attainable rank.
///
/// With `Rᵀ·L = U·Σ·Zᵀ`, the bases are `W = L·Z·Σ^{-1/2}` and
/// `V = R·U·Σ^{-1/2}`; singular values at or below `RANK_TOL·σ₁` are dropped.
pub fn balance_full(p_factor: &SymmetricFactor, q_factor: &SymmetricFactor) -> Result<BalancedBases> {
    balance_full_tol(p_factor, q_factor, RANK_TOL)
}

/// Relative cutoff for Hankel singular values of Gramian factors obtained
/// from dense Lyapunov solutions. Factors recovered from a computed Gramian
/// carry errors of order `√ε` relative to its norm, so smaller values are
/// not resolved.
pub const GRAMIAN_RANK_TOL: f64 = 1.5e-8;

/// [`balance_full`] with singular values at or below `tol·σ₁` dropped.
pub fn balance_full_tol(p_factor: &SymmetricFactor, q_factor: &SymmetricFactor, tol: f64) -> Result<BalancedBases> {
    let l = p_factor.factor();
    let r = q_factor.factor();
    if l.nrows() != r.nrows() {
        return Err(Error::DimensionMismatch {
            op: "balance",
            expected: format!("factors with {} rows", l.nrows()),
            found: format!("{}", r.nrows()),
        });
    }
    let d = l.nrows();
    let product = r.transpose() * l;
    let dec = svd(&product)?;
    let k = numerical_rank(dec.s.as_slice(), tol);

    let mut w = DenseMatrix::zeros(d, k);
    let mut v = DenseMatrix::zeros(d, k);
    let mut sigma = Vec::with_capacity(k);
    for j in 0..k {
        let s = dec.s[j];
        let scale = 1.0 / s.sqrt();
        w.set_column(j, &(l * dec.vt.row(j).transpose() * scale));
        v.set_column(j, &(r * dec.u.column(j) * scale));
        sigma.push(s);
    }
    Ok(BalancedBases { w, v, sigma })
}

/// Balancing bases truncated to rank `r`.
pub fn balance(p_factor: &SymmetricFactor, q_factor: &SymmetricFactor, r: usize) -> Result<BalancedBases> {
    balance_full(p_factor, q_factor)?.truncate(r)
}

/// Petrov–Galerkin reduced system `A_r = Vᵀ·A·W`, `C_r = C·W`, `B_r = Vᵀ·B`.
#[derive(Debug, Clone)]
pub struct ReducedLti {
    pub a_r: DenseMatrix,
    pub c_r: DenseMatrix,
    pub b_r: Option<DenseMatrix>,
    pub bases: BalancedBases,
}

impl ReducedLti {
    pub fn rank(&self) -> usize {
        self.a_r.nrows()
    }
}

pub fn project(sys: &LtiSystem, bases: &BalancedBases) -> Result<ReducedLti> {
    let d = sys.dim();
    if bases.w.nrows() != d || bases.v.nrows() != d {
        return Err(Error::DimensionMismatch {
            op: "project",
            expected: format!("bases with {d} rows"),
            found: format!("{}", bases.w.nrows()),
        });
    }
    let vt = bases.v.transpose();
    Ok(ReducedLti {
        a_r: &vt * sys.a() * &bases.w,
        c_r: sys.c() * &bases.w,
        b_r: sys.b().map(|b| &vt * b),
        bases: bases.clone(),
    })
}

/// Positive, strictly increasing measurement times.
pub fn validate_times(times: &[f64]) -> Result<()> {
    let ok = times.first().is_some_and(|&t| t > 0.0 && t.is_finite())
        && times.windows(2).all(|w| w[1] > w[0] && w[1].is_finite());
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidTimes)
    }
}

/// Visits the one-step transition matrices `e^{A(t_k − t_{k−1})}` (with
/// `t_0 = 0`), reusing the exponential while consecutive gaps agree.
pub fn for_each_transition(a: &DenseMatrix, times: &[f64], mut visit: impl FnMut(usize, &DenseMatrix)) -> Result<()> {
    validate_times(times)?;
    let mut prev_t = 0.0;
    let mut cached: Option<(f64, DenseMatrix)> = None;
    for (k, &t) in times.iter().enumerate() {
        let gap = t - prev_t;
        let reuse = matches!(&cached, Some((g, _)) if (gap - g).abs() <= 1e-12 * gap);
        if !reuse {
            cached = Some((gap, matops::expm(a, gap)?));
        }
        if let Some((_, phi)) = &cached {
            visit(k, phi);
        }
        prev_t = t;
    }
    Ok(())
}

/// Output samples `C·e^{A·t_k}·x0`, one row per time.
pub fn simulate_unforced(sys: &LtiSystem, x0: &DVector<f64>, times: &[f64]) -> Result<DenseMatrix> {
    if x0.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            op: "simulate_unforced",
            expected: format!("initial state of length {}", sys.dim()),
            found: format!("{}", x0.len()),
        });
    }
    let mut out = DenseMatrix::zeros(times.len(), sys.d_out());
    let mut x = x0.clone();
    for_each_transition(sys.a(), times, |k, phi| {
        x = phi * &x;
        out.set_row(k, &(sys.c() * &x).transpose());
    })?;
    Ok(out)
}

/// Factor of `P` with `A·P + P·Aᵀ = −B·Bᵀ`.
pub fn reachability_gramian(sys: &LtiSystem) -> Result<SymmetricFactor> {
    sys.ensure_stable()?;
    let b = sys
        .b()
        .ok_or_else(|| Error::Invalid("reachability Gramian requires an input matrix".into()))?;
    solve_lyapunov(sys.a(), &SymmetricFactor::from_factor(b.clone())?)
}

/// Factor of `Q_ε` with `Aᵀ·Q + Q·A = −Cᵀ·Γ_ε⁻¹·C`.
pub fn observability_gramian_weighted(sys: &LtiSystem, noise_cov: &DenseMatrix) -> Result<SymmetricFactor> {
    sys.ensure_stable()?;
    if noise_cov.shape() != (sys.d_out(), sys.d_out()) {
        return Err(Error::DimensionMismatch {
            op: "observability_gramian_weighted",
            expected: format!("{0}x{0} noise covariance", sys.d_out()),
            found: format!("{}x{}", noise_cov.nrows(), noise_cov.ncols()),
        });
    }
    let chol = cholesky_lower(noise_cov, "noise covariance")?;
    let whitened_c = whiten_rows(&chol, sys.c())?;
    solve_lyapunov(
        &sys.a().transpose(),
        &SymmetricFactor::from_factor(whitened_c.transpose())?,
    )
}

/// `L⁻¹·M` for lower-triangular `L`.
pub(crate) fn whiten_rows(chol: &DenseMatrix, m: &DenseMatrix) -> Result<DenseMatrix> {
    chol.solve_lower_triangular(m).ok_or(Error::NotPositiveDefinite {
        what: "noise covariance",
    })
}

/// `2·Σ_{k>r} σ_k`.
pub fn hankel_tail_bound(sigma: &[f64], r: usize) -> f64 {
    assert!(r <= sigma.len(), "rank {r} exceeds {} values", sigma.len());
    2.0 * sigma[r..].iter().sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matops::sym_eig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(v: &[f64]) -> DenseMatrix {
        DenseMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    fn factor_of(m: &DenseMatrix) -> SymmetricFactor {
        SymmetricFactor::from_psd(m).unwrap()
    }

    #[test]
    fn system_checks_dimensions_and_stability() {
        let sys = LtiSystem::new(diag(&[-1.0, -2.0]), DenseMatrix::identity(1, 2), None).unwrap();
        assert!(sys.is_stable());
        assert_eq!(sys.spectral_abscissa(), -1.0);

        assert!(LtiSystem::new(diag(&[-1.0, -2.0]), DenseMatrix::identity(1, 3), None).is_err());
        let unstable = LtiSystem::new(diag(&[-1.0, 0.0]), DenseMatrix::identity(1, 2), None).unwrap();
        assert!(matches!(unstable.ensure_stable(), Err(Error::Unstable { .. })));
    }

    #[test]
    fn balance_identity_pair_gives_orthogonal_projectors() {
        let bases = balance(&SymmetricFactor::identity(4), &SymmetricFactor::identity(4), 4).unwrap();
        assert!(bases.sigma.iter().all(|&s| (s - 1.0).abs() < 1e-14));
        let w = &bases.w;
        assert!((w * w.transpose() - DenseMatrix::identity(4, 4)).norm() < 1e-13);

        let b2 = bases.truncate(2).unwrap();
        let pi = b2.projector();
        assert!((&pi * &pi - &pi).norm() < 1e-13);
        assert!((&pi - pi.transpose()).norm() < 1e-13);
        assert!((pi.trace() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn balance_two_by_two_by_hand() {
        // P·Q = diag(4,1): σ² = (4,1), leading direction e₁.
        let bases = balance(&factor_of(&diag(&[4.0, 1.0])), &SymmetricFactor::identity(2), 1).unwrap();
        assert!((bases.sigma[0] - 2.0).abs() < 1e-14);
        assert!(bases.w[(1, 0)].abs() < 1e-14 && bases.w[(0, 0)].abs() > 0.0);
    }

    #[test]
    fn balance_rank_deficient_prior() {
        let p = factor_of(&diag(&[1.0, 0.0]));
        let bases = balance_full(&p, &SymmetricFactor::identity(2)).unwrap();
        assert_eq!(bases.rank(), 1);
        assert!((bases.sigma[0] - 1.0).abs() < 1e-14);
        assert!(bases.w[(1, 0)].abs() < 1e-14);
        match balance(&p, &SymmetricFactor::identity(2), 2) {
            Err(Error::RankExceeded {
                requested: 2,
                attainable: 1,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn balance_matches_eigendecomposition_of_pq() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let l = DenseMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let r = DenseMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let p = &l * l.transpose();
        let q = &r * r.transpose();
        let bases = balance_full(
            &SymmetricFactor::from_factor(l).unwrap(),
            &SymmetricFactor::from_factor(r).unwrap(),
        )
        .unwrap();
        // P·Q·W = W·Σ² column by column.
        let pqw = &p * &q * &bases.w;
        for j in 0..5 {
            let s2 = bases.sigma[j] * bases.sigma[j];
            let res = (pqw.column(j) - bases.w.column(j) * s2).norm();
            assert!(res < 1e-9 * s2 * bases.w.column(j).norm());
        }
        let vtw = bases.v.transpose() * &bases.w;
        assert!((vtw - DenseMatrix::identity(5, 5)).norm() < 1e-9);
        let wqw = bases.w.transpose() * &q * &bases.w;
        let vpv = bases.v.transpose() * &p * &bases.v;
        let sig = diag(&bases.sigma);
        assert!((wqw - &sig).norm() < 1e-8 * bases.sigma[0]);
        assert!((vpv - &sig).norm() < 1e-8 * bases.sigma[0]);
    }

    #[test]
    fn project_examples() {
        let sys = LtiSystem::new(diag(&[-1.0, -2.0]), DenseMatrix::identity(2, 2), None).unwrap();
        let full = BalancedBases {
            w: DenseMatrix::identity(2, 2),
            v: DenseMatrix::identity(2, 2),
            sigma: vec![1.0, 1.0],
        };
        assert_eq!(project(&sys, &full).unwrap().a_r, *sys.a());
        let red = project(&sys, &full.truncate(1).unwrap()).unwrap();
        assert_eq!(red.a_r[(0, 0)], -1.0);
        assert!(red.b_r.is_none());
    }

    #[test]
    fn simulate_scalar_decay() {
        let sys = LtiSystem::new(diag(&[-1.0]), DenseMatrix::identity(1, 1), None).unwrap();
        let y = simulate_unforced(&sys, &DVector::from_element(1, 1.0), &[1.0, 2.0]).unwrap();
        assert!((y[(0, 0)] - (-1f64).exp()).abs() < 1e-15);
        assert!((y[(1, 0)] - (-2f64).exp()).abs() < 1e-15);

        let zero = simulate_unforced(&sys, &DVector::zeros(1), &[0.5, 1.0]).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        assert!(matches!(
            simulate_unforced(&sys, &DVector::zeros(1), &[1.0, 1.0]),
            Err(Error::InvalidTimes)
        ));
    }

    #[test]
    fn gramian_examples() {
        let sys = LtiSystem::new(
            diag(&[-1.0, -2.0]),
            DenseMatrix::identity(2, 2),
            Some(DenseMatrix::identity(2, 2)),
        )
        .unwrap();
        let p = reachability_gramian(&sys).unwrap().to_dense();
        assert!((p - diag(&[0.5, 0.25])).norm() < 1e-14);

        let sys0 = LtiSystem::new(
            diag(&[-1.0, -2.0]),
            DenseMatrix::identity(2, 2),
            Some(DenseMatrix::zeros(2, 1)),
        )
        .unwrap();
        assert_eq!(reachability_gramian(&sys0).unwrap().rank(), 0);

        let scalar = LtiSystem::new(diag(&[-1.0]), DenseMatrix::identity(1, 1), None).unwrap();
        let q = observability_gramian_weighted(&scalar, &diag(&[1.0]))
            .unwrap()
            .to_dense();
        assert!((q[(0, 0)] - 0.5).abs() < 1e-15);
        let q4 = observability_gramian_weighted(&scalar, &diag(&[4.0]))
            .unwrap()
            .to_dense();
        assert!((q4[(0, 0)] - 0.125).abs() < 1e-15);
        assert!(observability_gramian_weighted(&scalar, &diag(&[-1.0])).is_err());
    }

    #[test]
    fn weighted_gramian_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = DenseMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let a = m - DenseMatrix::identity(4, 4) * 3.0;
        let c = DenseMatrix::from_fn(2, 4, |_, _| rng.random_range(-1.0..1.0));
        let noise = diag(&[0.5, 2.0]);
        let sys = LtiSystem::new(a.clone(), c.clone(), None).unwrap();
        let q = observability_gramian_weighted(&sys, &noise).unwrap().to_dense();

        // Trapezoid rule on [0, 20] with Richardson extrapolation.
        let integrand = |t: f64| {
            let e = matops::expm(&a, t).unwrap();
            e.transpose() * c.transpose() * noise.clone().try_inverse().unwrap() * &c * e
        };
        let trap = |h: f64| {
            let n = (20.0 / h).round() as usize;
            let mut acc = (integrand(0.0) + integrand(20.0)) * 0.5;
            for k in 1..n {
                acc += integrand(k as f64 * h);
            }
            acc * h
        };
        let coarse = trap(0.02);
        let fine = trap(0.01);
        let quad = (&fine * 4.0 - coarse) / 3.0;
        assert!((quad - &q).norm() < 1e-6 * q.norm());
    }

    #[test]
    fn hankel_tail_examples() {
        assert_eq!(hankel_tail_bound(&[3.0, 2.0, 1.0], 1), 6.0);
        assert_eq!(hankel_tail_bound(&[3.0, 2.0, 1.0], 3), 0.0);
        assert!((hankel_tail_bound(&[1.0, 0.1, 0.01], 2) - 0.02).abs() < 1e-16);
    }

    #[test]
    fn gramian_balancing_of_stable_system_is_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = DenseMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let a = &m - DenseMatrix::identity(6, 6) * (matops::norm2(&m) + 0.2);
        let b = DenseMatrix::from_fn(6, 2, |_, _| rng.random_range(-1.0..1.0));
        let c = DenseMatrix::from_fn(2, 6, |_, _| rng.random_range(-1.0..1.0));
        let sys = LtiSystem::new(a, c, Some(b)).unwrap();
        let p = reachability_gramian(&sys).unwrap();
        let q = observability_gramian_weighted(&sys, &DenseMatrix::identity(2, 2)).unwrap();
        let full = balance_full(&p, &q).unwrap();
        for r in 1..=full.rank() {
            let red = project(&sys, &full.truncate(r).unwrap()).unwrap();
            let eigs = matops::spectrum(&red.a_r).unwrap();
            assert!(eigs.iter().all(|e| e.re < 0.0), "r = {r}");
        }
        let _ = sym_eig(&p.to_dense()).unwrap();
    }
}
