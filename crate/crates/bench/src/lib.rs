//! Shared problem generators for the benchmarks.

use bayesbt_core::{DenseMatrix, GaussianBelief, LtiSystem, ObservationSetup, SymmetricFactor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DenseMatrix {
    DenseMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

/// Random matrix shifted so that its symmetric part is negative definite.
pub fn stable(rng: &mut ChaCha8Rng, d: usize) -> DenseMatrix {
    let m = random(rng, d, d);
    let sym = (&m + m.transpose()) * 0.5;
    m - DenseMatrix::identity(d, d) * (sym.symmetric_eigenvalues().max() + 0.5)
}

/// A stable system with two outputs, a rank-`s` prior and ten observation times.
pub fn problem(d: usize, s: usize, seed: u64) -> (LtiSystem, GaussianBelief, ObservationSetup) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sys = LtiSystem::new(stable(&mut rng, d), random(&mut rng, 2, d), None).unwrap();
    let prior = GaussianBelief::centered(SymmetricFactor::from_factor(random(&mut rng, d, s)).unwrap());
    let obs = ObservationSetup::equidistant(0.5, 5.0, DenseMatrix::identity(2, 2) * 1e-3).unwrap();
    (sys, prior, obs)
}
