//! Real Schur form and Bartels–Stewart solvers for Sylvester and Lyapunov
//! equations.

use nalgebra::{DMatrix, DVector};

use super::{ensure_finite, ensure_square, norm2, DenseMatrix, SymmetricFactor};
use crate::error::{Eigenvalue, Error, Result};

/// Real Schur decomposition `a = unitary · quasi_triangular · unitaryᵀ`.
#[derive(Debug, Clone)]
pub struct SchurForm {
    pub unitary: DenseMatrix,
    pub quasi_triangular: DenseMatrix,
    /// Diagonal blocks as `(start, size)` with size 1 or 2.
    blocks: Vec<(usize, usize)>,
}

impl SchurForm {
    pub fn blocks(&self) -> &[(usize, usize)] {
        &self.blocks
    }

    /// Eigenvalues read off the diagonal blocks, in block order.
    pub fn eigenvalues(&self) -> Vec<Eigenvalue> {
        let t = &self.quasi_triangular;
        let mut out = Vec::with_capacity(t.nrows());
        for &(i, size) in &self.blocks {
            if size == 1 {
                out.push(Eigenvalue { re: t[(i, i)], im: 0.0 });
                continue;
            }
            let (p, q, r, s) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            let half_tr = 0.5 * (p + s);
            let disc = 0.25 * (p - s) * (p - s) + q * r;
            if disc >= 0.0 {
                let root = disc.sqrt();
                out.push(Eigenvalue {
                    re: half_tr + root,
                    im: 0.0,
                });
                out.push(Eigenvalue {
                    re: half_tr - root,
                    im: 0.0,
                });
            } else {
                let root = (-disc).sqrt();
                out.push(Eigenvalue { re: half_tr, im: root });
                out.push(Eigenvalue { re: half_tr, im: -root });
            }
        }
        out
    }
}

/// Computes the real Schur form and identifies its 1×1/2×2 diagonal blocks.
pub fn real_schur(a: &DenseMatrix) -> Result<SchurForm> {
    ensure_square(a, "real_schur")?;
    ensure_finite(a, "real_schur")?;
    let n = a.nrows();
    if n == 0 {
        return Ok(SchurForm {
            unitary: DenseMatrix::zeros(0, 0),
            quasi_triangular: DenseMatrix::zeros(0, 0),
            blocks: Vec::new(),
        });
    }
    let dec = nalgebra::Schur::try_new(a.clone(), f64::EPSILON, 100 * n.max(10))
        .ok_or(Error::NonConvergence { op: "real_schur" })?;
    let (unitary, mut t) = dec.unpack();

    for j in 0..n {
        for i in (j + 2)..n {
            t[(i, j)] = 0.0;
        }
    }
    for i in 0..n.saturating_sub(1) {
        let local = t[(i, i)].abs() + t[(i + 1, i + 1)].abs();
        if t[(i + 1, i)].abs() <= f64::EPSILON * local {
            t[(i + 1, i)] = 0.0;
        }
    }

    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            if i + 2 < n && t[(i + 2, i + 1)] != 0.0 {
                return Err(Error::NonConvergence { op: "real_schur" });
            }
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    Ok(SchurForm {
        unitary,
        quasi_triangular: t,
        blocks,
    })
}

/// Eigenvalues of a square matrix via its real Schur form.
pub fn spectrum(a: &DenseMatrix) -> Result<Vec<Eigenvalue>> {
    Ok(real_schur(a)?.eigenvalues())
}

/// Solves `a·S + S·b + c = 0` by Bartels–Stewart.
pub fn solve_sylvester(a: &DenseMatrix, b: &DenseMatrix, c: &DenseMatrix) -> Result<DenseMatrix> {
    ensure_square(a, "solve_sylvester")?;
    ensure_square(b, "solve_sylvester")?;
    ensure_finite(c, "solve_sylvester")?;
    let (n, m) = (a.nrows(), b.nrows());
    if c.shape() != (n, m) {
        return Err(Error::DimensionMismatch {
            op: "solve_sylvester",
            expected: format!("{n}x{m}"),
            found: format!("{}x{}", c.nrows(), c.ncols()),
        });
    }
    if n == 0 || m == 0 {
        return Ok(DenseMatrix::zeros(n, m));
    }
    let sa = real_schur(a)?;
    let sb = real_schur(b)?;
    check_spectral_gap(&sa.eigenvalues(), &sb.eigenvalues(), a.norm() + b.norm())?;

    let rhs = -(sa.unitary.transpose() * c * &sb.unitary);
    let y = solve_quasi_triangular(
        &sa.quasi_triangular,
        sa.blocks(),
        &sb.quasi_triangular,
        sb.blocks(),
        rhs,
    )?;
    Ok(&sa.unitary * y * sb.unitary.transpose())
}

/// Solves `a·X + X·aᵀ = −F·Fᵀ` for stable `a` and returns `X` as a
/// rank-truncated square-root factor.
pub fn solve_lyapunov(a: &DenseMatrix, rhs_factor: &SymmetricFactor) -> Result<SymmetricFactor> {
    ensure_square(a, "solve_lyapunov")?;
    let n = a.nrows();
    let f = rhs_factor.factor();
    if f.nrows() != n {
        return Err(Error::DimensionMismatch {
            op: "solve_lyapunov",
            expected: format!("{n} rows in the right-hand side factor"),
            found: format!("{}", f.nrows()),
        });
    }
    if n == 0 {
        return Ok(SymmetricFactor::zero(0));
    }
    let schur = real_schur(a)?;
    let eigs = schur.eigenvalues();
    check_stable(&eigs, norm2(a))?;
    if f.ncols() == 0 {
        return Ok(SymmetricFactor::zero(n));
    }

    let u = &schur.unitary;
    let t = &schur.quasi_triangular;
    let uf = u.transpose() * f;
    let rhs = -(&uf * uf.transpose());

    // T·Y + Y·Tᵀ = rhs. With J the reversal permutation, J·Tᵀ·J is upper
    // quasi-triangular, so Y·J solves a standard Bartels–Stewart system.
    let rev = |m: &DenseMatrix| DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, m.ncols() - 1 - j)]);
    let tt_rev = DenseMatrix::from_fn(n, n, |i, j| t[(n - 1 - j, n - 1 - i)]);
    let rev_blocks: Vec<(usize, usize)> = schur
        .blocks()
        .iter()
        .rev()
        .map(|&(start, size)| (n - start - size, size))
        .collect();
    let y_rev = solve_quasi_triangular(t, schur.blocks(), &tt_rev, &rev_blocks, rev(&rhs))?;
    let y = rev(&y_rev);

    let x = u * y * u.transpose();
    let x = (&x + x.transpose()) * 0.5;
    SymmetricFactor::from_psd(&x)
}

pub(crate) fn check_stable(eigs: &[Eigenvalue], scale: f64) -> Result<()> {
    let margin = -1e-12 * scale;
    match eigs.iter().copied().max_by(|x, y| x.re.total_cmp(&y.re)) {
        Some(worst) if worst.re >= margin => Err(Error::Unstable { eigenvalue: worst }),
        _ => Ok(()),
    }
}

fn check_spectral_gap(ea: &[Eigenvalue], eb: &[Eigenvalue], scale: f64) -> Result<()> {
    let mut gap = f64::INFINITY;
    for x in ea {
        for y in eb {
            gap = gap.min((x.re + y.re).hypot(x.im + y.im));
        }
    }
    if gap <= 8.0 * f64::EPSILON * scale {
        Err(Error::SingularEquation { gap })
    } else {
        Ok(())
    }
}

/// Solves `T·Y + Y·R = G` for upper quasi-triangular `T` and `R` by block
/// back-substitution: columns of `R` left to right, rows of `T` bottom up.
fn solve_quasi_triangular(
    t: &DenseMatrix,
    t_blocks: &[(usize, usize)],
    r: &DenseMatrix,
    r_blocks: &[(usize, usize)],
    g: DenseMatrix,
) -> Result<DenseMatrix> {
    let n = t.nrows();
    let mut y = DenseMatrix::zeros(n, r.nrows());
    for &(j0, q) in r_blocks {
        let mut rhs_cols = g.columns(j0, q).into_owned();
        if j0 > 0 {
            rhs_cols -= y.columns(0, j0) * r.view((0, j0), (j0, q));
        }
        for &(i0, p) in t_blocks.iter().rev() {
            let tail = n - i0 - p;
            let mut rhs = rhs_cols.rows(i0, p).into_owned();
            if tail > 0 {
                rhs -= t.view((i0, i0 + p), (p, tail)) * y.view((i0 + p, j0), (tail, q));
            }
            let block = solve_small(
                &t.view((i0, i0), (p, p)).into_owned(),
                &r.view((j0, j0), (q, q)).into_owned(),
                &rhs,
            )?;
            y.view_mut((i0, j0), (p, q)).copy_from(&block);
        }
    }
    Ok(y)
}

/// Solves the at most 4×4 system `T·Y + Y·R = G` through its Kronecker form.
fn solve_small(t: &DenseMatrix, r: &DenseMatrix, g: &DenseMatrix) -> Result<DenseMatrix> {
    let (p, q) = (t.nrows(), r.nrows());
    if p == 1 && q == 1 {
        let denom = t[(0, 0)] + r[(0, 0)];
        if denom == 0.0 {
            return Err(Error::SingularEquation { gap: 0.0 });
        }
        return Ok(DenseMatrix::from_element(1, 1, g[(0, 0)] / denom));
    }
    let size = p * q;
    // vec(T·Y + Y·R) = (I_q ⊗ T + Rᵀ ⊗ I_p)·vec(Y), column-major vec.
    let k = DMatrix::from_fn(size, size, |row, col| {
        let (ri, rj) = (row % p, row / p);
        let (ci, cj) = (col % p, col / p);
        let mut v = 0.0;
        if rj == cj {
            v += t[(ri, ci)];
        }
        if ri == ci {
            v += r[(cj, rj)];
        }
        v
    });
    let rhs = DVector::from_column_slice(g.as_slice());
    let sol = k
        .full_piv_lu()
        .solve(&rhs)
        .ok_or(Error::SingularEquation { gap: 0.0 })?;
    Ok(DenseMatrix::from_column_slice(p, q, sol.as_slice()))
}
