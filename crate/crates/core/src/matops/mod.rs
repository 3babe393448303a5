//! Dense linear-algebra kernels: SVD and symmetric eigendecomposition with
//! deterministic sign conventions, the matrix exponential, and Schur-based
//! Sylvester/Lyapunov solvers.
//!
//! Factorizations delegate to `nalgebra`; the wrappers here fix ordering and
//! signs so that bases built on top of them are reproducible.

mod expm;
mod schur;

pub use expm::expm;
pub use schur::{real_schur, solve_lyapunov, solve_sylvester, spectrum, SchurForm};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Column-major real matrix; the numeric carrier for every operator.
pub type DenseMatrix = DMatrix<f64>;

/// Relative tolerance (to the leading singular value) used for every rank
/// decision in the crate.
pub const RANK_TOL: f64 = 1e-12;

/// Square-root representation `M = F·Fᵀ` of a symmetric positive
/// semi-definite matrix, with the factor's columns linearly independent.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricFactor {
    factor: DenseMatrix,
}

impl SymmetricFactor {
    /// Wraps a factor whose columns are already known to be independent.
    pub fn from_factor(factor: DenseMatrix) -> Result<Self> {
        ensure_finite(&factor, "symmetric factor")?;
        Ok(Self { factor })
    }

    /// Builds a factor from arbitrary columns, compressing to numerical rank
    /// with an SVD: `F = U_k·S_k`.
    pub fn compress(m: &DenseMatrix) -> Result<Self> {
        ensure_finite(m, "symmetric factor")?;
        if m.ncols() == 0 || m.nrows() == 0 {
            return Ok(Self::zero(m.nrows()));
        }
        let svd = svd(m)?;
        let k = numerical_rank(svd.s.as_slice(), RANK_TOL);
        let mut f = svd.u.columns(0, k).into_owned();
        for (j, mut col) in f.column_iter_mut().enumerate() {
            col *= svd.s[j];
        }
        Ok(Self { factor: f })
    }

    /// Factor of a symmetric PSD matrix from its eigendecomposition. The rank
    /// is decided on the eigenvalues of `m` itself; negative and
    /// sub-tolerance eigenvalues are dropped.
    pub fn from_psd(m: &DenseMatrix) -> Result<Self> {
        let eig = sym_eig(m)?;
        let clipped: Vec<f64> = eig.vals.iter().map(|&v| v.max(0.0)).collect();
        let k = numerical_rank(&clipped, RANK_TOL);
        let roots: Vec<f64> = clipped.iter().map(|v| v.sqrt()).collect();
        let mut f = eig.vecs.columns(0, k).into_owned();
        for (j, mut col) in f.column_iter_mut().enumerate() {
            col *= roots[j];
        }
        Ok(Self { factor: f })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            factor: DenseMatrix::identity(d, d),
        }
    }

    pub fn zero(d: usize) -> Self {
        Self {
            factor: DenseMatrix::zeros(d, 0),
        }
    }

    pub fn factor(&self) -> &DenseMatrix {
        &self.factor
    }

    pub fn into_factor(self) -> DenseMatrix {
        self.factor
    }

    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    /// Assembles `F·Fᵀ`.
    pub fn to_dense(&self) -> DenseMatrix {
        &self.factor * self.factor.transpose()
    }
}

/// Thin singular value decomposition `m = U·diag(s)·Vt`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub s: DVector<f64>,
    pub vt: DenseMatrix,
}

/// Thin SVD with singular values in non-increasing order. In each left
/// singular vector the entry of largest magnitude is made positive (the
/// matching right vector is flipped with it).
pub fn svd(m: &DenseMatrix) -> Result<Svd> {
    ensure_finite(m, "svd")?;
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Ok(Svd {
            u: DenseMatrix::zeros(rows, 0),
            s: DVector::zeros(0),
            vt: DenseMatrix::zeros(0, cols),
        });
    }
    let (u, s, vt) = if rows >= cols {
        triangular_svd(m)?
    } else {
        let (u, s, vt) = triangular_svd(&m.transpose())?;
        (vt.transpose(), s, u.transpose())
    };

    // Stable sort so that ties keep the factorization's order.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));

    let mut u_out = DenseMatrix::zeros(rows, k);
    let mut vt_out = DenseMatrix::zeros(k, cols);
    let mut s_out = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        let sign = dominant_sign(u.column(src).as_slice());
        u_out.set_column(dst, &(u.column(src) * sign));
        vt_out.set_row(dst, &(vt.row(src) * sign));
        s_out[dst] = s[src];
    }
    Ok(Svd {
        u: u_out,
        s: s_out,
        vt: vt_out,
    })
}

/// SVD of a tall matrix through its QR factor. Reducing to the square
/// triangular factor first keeps the reconstruction at roundoff level for
/// columns of widely differing norms.
fn triangular_svd(m: &DenseMatrix) -> Result<(DenseMatrix, DVector<f64>, DenseMatrix)> {
    let qr = m.clone().qr();
    let dec =
        nalgebra::SVD::try_new(qr.r(), true, true, f64::EPSILON, 10_000).ok_or(Error::NonConvergence { op: "svd" })?;
    let u = dec.u.ok_or(Error::NonConvergence { op: "svd" })?;
    let vt = dec.v_t.ok_or(Error::NonConvergence { op: "svd" })?;
    Ok((qr.q() * u, dec.singular_values, vt))
}

/// Eigendecomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub vals: DVector<f64>,
    pub vecs: DenseMatrix,
}

/// Symmetric eigendecomposition with eigenvalues in non-increasing order and
/// the same sign convention as [`svd`].
pub fn sym_eig(m: &DenseMatrix) -> Result<SymEig> {
    ensure_finite(m, "sym_eig")?;
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            op: "sym_eig",
            expected: "square matrix".into(),
            found: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(SymEig {
            vals: DVector::zeros(0),
            vecs: DenseMatrix::zeros(0, 0),
        });
    }
    let scale = m.norm();
    let asym = (m - m.transpose()).norm();
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric {
            op: "sym_eig",
            asymmetry: asym / scale,
        });
    }
    let sym = (m + m.transpose()) * 0.5;
    let dec =
        nalgebra::SymmetricEigen::try_new(sym, f64::EPSILON, 10_000).ok_or(Error::NonConvergence { op: "sym_eig" })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| dec.eigenvalues[j].total_cmp(&dec.eigenvalues[i]));
    let mut vals = DVector::zeros(n);
    let mut vecs = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = dec.eigenvectors.column(src);
        let sign = dominant_sign(col.as_slice());
        vecs.set_column(dst, &(col * sign));
        vals[dst] = dec.eigenvalues[src];
    }
    Ok(SymEig { vals, vecs })
}

/// Largest `k` with `s[k-1] > tol_rel·s[0]`; zero for an empty or all-zero
/// sequence.
pub fn numerical_rank(s: &[f64], tol_rel: f64) -> usize {
    let Some(&lead) = s.first() else {
        return 0;
    };
    if lead <= 0.0 {
        return 0;
    }
    let cut = tol_rel * lead;
    s.iter().take_while(|&&v| v > cut).count()
}

/// Spectral norm via the leading singular value.
pub fn norm2(m: &DenseMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    nalgebra::SVD::new(m.clone(), false, false).singular_values.max()
}

pub(crate) fn ensure_finite(m: &DenseMatrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what })
    }
}

pub(crate) fn ensure_square(m: &DenseMatrix, op: &'static str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            op,
            expected: "square matrix".into(),
            found: format!("{}x{}", m.nrows(), m.ncols()),
        })
    }
}

/// Lower Cholesky factor of an SPD matrix.
pub fn cholesky_lower(m: &DenseMatrix, what: &'static str) -> Result<DenseMatrix> {
    ensure_finite(m, what)?;
    ensure_square(m, what)?;
    let scale = m.norm().max(f64::MIN_POSITIVE);
    if (m - m.transpose()).norm() > 1e-10 * scale {
        return Err(Error::NotPositiveDefinite { what });
    }
    nalgebra::Cholesky::new(m.clone())
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite { what })
}

/// Sign (±1) that makes the entry of largest magnitude positive; the first
/// such entry wins ties.
fn dominant_sign(v: &[f64]) -> f64 {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v {
        if x.abs() > best {
            best = x.abs();
            sign = if x < 0.0 { -1.0 } else { 1.0 };
        }
    }
    sign
}
