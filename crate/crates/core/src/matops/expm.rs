//! Matrix exponential by scaling and squaring with diagonal Padé approximants
//! of degree 3, 5, 7, 9 or 13, selected from the 1-norm of the argument.

use super::{ensure_finite, ensure_square, DenseMatrix};
use crate::error::{Error, Result};

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA3: f64 = 1.495585217958292e-2;
const THETA5: f64 = 2.53939833006323e-1;
const THETA7: f64 = 9.504178996162932e-1;
const THETA9: f64 = 2.097847961257068e0;
const THETA13: f64 = 5.371920351148152e0;

// Beyond this many squarings the scaled argument underflows to nothing useful.
const MAX_SQUARINGS: i32 = 1000;

/// Computes `e^{a·t}`. Returns the identity exactly when `t == 0`.
pub fn expm(a: &DenseMatrix, t: f64) -> Result<DenseMatrix> {
    ensure_square(a, "expm")?;
    ensure_finite(a, "expm")?;
    let n = a.nrows();
    if t == 0.0 || n == 0 {
        return Ok(DenseMatrix::identity(n, n));
    }
    let at = a * t;
    let norm = norm1(&at);
    if !norm.is_finite() {
        return Err(Error::Overflow { norm });
    }

    let id = DenseMatrix::identity(n, n);
    let low: [(f64, &[f64]); 4] = [(THETA3, &PADE3), (THETA5, &PADE5), (THETA7, &PADE7), (THETA9, &PADE9)];
    for (theta, coeffs) in low {
        if norm <= theta {
            let (u, v) = pade_low(&at, &id, coeffs);
            return solve_pade(u, v, norm);
        }
    }

    let squarings = ((norm / THETA13).log2().ceil() as i32).max(0);
    if squarings > MAX_SQUARINGS {
        return Err(Error::Overflow { norm });
    }
    let scaled = at * 2f64.powi(-squarings);
    let (u, v) = pade13(&scaled, &id);
    let mut x = solve_pade(u, v, norm)?;
    for _ in 0..squarings {
        x = &x * &x;
    }
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::Overflow { norm })
    }
}

fn norm1(m: &DenseMatrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Odd/even parts `U`, `V` of a low-degree Padé approximant.
fn pade_low(a: &DenseMatrix, id: &DenseMatrix, b: &[f64]) -> (DenseMatrix, DenseMatrix) {
    let a2 = a * a;
    let m = b.len() - 1;
    let mut powers = vec![id.clone()];
    for k in 1..=m / 2 {
        let next = &powers[k - 1] * &a2;
        powers.push(next);
    }
    let n = a.nrows();
    let mut u = DenseMatrix::zeros(n, n);
    let mut v = DenseMatrix::zeros(n, n);
    for (k, p) in powers.iter().enumerate() {
        u += p * b[2 * k + 1];
        v += p * b[2 * k];
    }
    (a * u, v)
}

fn pade13(a: &DenseMatrix, id: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let b = &PADE13;
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + id * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + id * b[0];
    (u, v)
}

fn solve_pade(u: DenseMatrix, v: DenseMatrix, norm: f64) -> Result<DenseMatrix> {
    let q = &v - &u;
    let p = v + u;
    q.lu().solve(&p).ok_or(Error::Overflow { norm })
}
