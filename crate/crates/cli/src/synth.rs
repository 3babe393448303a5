//! Benchmark systems: loaded from Matrix Market files or synthesized.

use std::path::Path;

use bayesbt_core::{DenseMatrix, LtiSystem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{CliError, CliResult};
use crate::mtx::read_mtx;

/// Reads `A`, `B` and `C`. An unstable system is accepted with a warning;
/// the Gramian-based methods refuse it later.
pub fn load_system(a: &Path, b: &Path, c: &Path) -> CliResult<LtiSystem> {
    let a = read_mtx(a)?;
    let b = read_mtx(b)?;
    let c = read_mtx(c)?;
    let sys = LtiSystem::new(a, c, Some(b)).map_err(|e| CliError::Config(format!("system matrices: {e}")))?;
    if sys.is_stable() {
        log::info!(
            "loaded system d={} d_out={} (spectral abscissa {:.3e})",
            sys.dim(),
            sys.d_out(),
            sys.spectral_abscissa()
        );
    } else {
        log::warn!(
            "system is not asymptotically stable (spectral abscissa {:.3e})",
            sys.spectral_abscissa()
        );
    }
    Ok(sys)
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut *rng))
}

/// Stable test system `A = Q·D·Qᵀ` with `D` block diagonal: eigenvalue real
/// parts log-spaced in `[−spread, −0.1]`, about a third of them paired into
/// complex-conjugate 2×2 blocks. `C` and `B` (with `d_out` columns) have
/// standard normal entries scaled by `1/√d`.
pub fn synth_system(d: usize, d_out: usize, spread: f64, seed: u64) -> CliResult<LtiSystem> {
    if d < 2 {
        return Err(CliError::Config(format!("synthetic system needs d >= 2, got {d}")));
    }
    if d_out == 0 {
        return Err(CliError::Config("synthetic system needs d_out >= 1".into()));
    }
    if !(spread >= 0.1 && spread.is_finite()) {
        return Err(CliError::Config(format!(
            "spectrum spread must be >= 0.1, got {spread}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let real = |i: usize| -0.1 * (spread / 0.1).powf(i as f64 / (d - 1) as f64);
    let mut blocks = DenseMatrix::zeros(d, d);
    let mut i = 0;
    while i < d {
        let alpha = real(i);
        if i + 1 < d && rng.random_bool(1.0 / 3.0) {
            let omega = rng.random_range(0.2..2.0);
            blocks[(i, i)] = alpha;
            blocks[(i + 1, i + 1)] = alpha;
            blocks[(i, i + 1)] = omega;
            blocks[(i + 1, i)] = -omega;
            i += 2;
        } else {
            blocks[(i, i)] = alpha;
            i += 1;
        }
    }
    let q = gaussian(&mut rng, d, d).qr().q();
    let a = &q * blocks * q.transpose();
    let scale = 1.0 / (d as f64).sqrt();
    let c = gaussian(&mut rng, d_out, d) * scale;
    let b = gaussian(&mut rng, d, d_out) * scale;
    Ok(LtiSystem::new(a, c, Some(b))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mtx::write_mtx;

    #[test]
    fn deterministic_per_seed() {
        let a = synth_system(12, 2, 5.0, 9).unwrap();
        let b = synth_system(12, 2, 5.0, 9).unwrap();
        assert_eq!(a.a(), b.a());
        assert_eq!(a.c(), b.c());
        assert_ne!(a.a(), synth_system(12, 2, 5.0, 10).unwrap().a());
    }

    #[test]
    fn spectrum_in_prescribed_band() {
        let sys = synth_system(20, 3, 8.0, 1).unwrap();
        assert_eq!(sys.b().unwrap().shape(), (20, 3));
        for e in sys.eigenvalues() {
            assert!(e.re < 0.0);
            assert!(e.re >= -8.0 - 1e-9 && e.re <= -0.1 + 1e-9, "{e:?}");
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(synth_system(1, 1, 5.0, 0), Err(CliError::Config(_))));
        assert!(matches!(synth_system(4, 1, 0.01, 0), Err(CliError::Config(_))));
    }

    #[test]
    fn load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let sys = synth_system(5, 2, 3.0, 4).unwrap();
        let p = |n: &str| dir.path().join(n);
        write_mtx(&p("A.mtx"), sys.a()).unwrap();
        write_mtx(&p("B.mtx"), sys.b().unwrap()).unwrap();
        write_mtx(&p("C.mtx"), sys.c()).unwrap();
        let back = load_system(&p("A.mtx"), &p("B.mtx"), &p("C.mtx")).unwrap();
        assert_eq!(back.a(), sys.a());
        assert_eq!(back.b(), sys.b());
    }

    #[test]
    fn load_reports_mismatch_and_parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = |n: &str| dir.path().join(n);
        write_mtx(&p("A.mtx"), &DenseMatrix::identity(3, 3)).unwrap();
        write_mtx(&p("B.mtx"), &DenseMatrix::zeros(2, 1)).unwrap();
        write_mtx(&p("C.mtx"), &DenseMatrix::zeros(1, 3)).unwrap();
        assert!(matches!(
            load_system(&p("A.mtx"), &p("B.mtx"), &p("C.mtx")),
            Err(CliError::Config(_))
        ));
        std::fs::write(p("B.mtx"), "garbage\n").unwrap();
        let err = load_system(&p("A.mtx"), &p("B.mtx"), &p("C.mtx")).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
