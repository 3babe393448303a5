use std::hint::black_box;

use bayesbt_bench::{random, stable};
use bayesbt_core::lti::balance_full;
use bayesbt_core::matops::{expm, solve_lyapunov, svd};
use bayesbt_core::SymmetricFactor;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SIZES: [usize; 3] = [20, 60, 120];

fn bench_expm(c: &mut Criterion) {
    let mut group = c.benchmark_group("expm");
    for d in SIZES {
        let a = stable(&mut ChaCha8Rng::seed_from_u64(d as u64), d);
        group.bench_with_input(BenchmarkId::from_parameter(d), &a, |b, a| {
            b.iter(|| expm(black_box(a), 1.0))
        });
    }
    group.finish();
}

fn bench_lyapunov(c: &mut Criterion) {
    let mut group = c.benchmark_group("lyapunov");
    for d in SIZES {
        let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
        let a = stable(&mut rng, d);
        let rhs = SymmetricFactor::from_factor(random(&mut rng, d, 3)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(d), &(a, rhs), |b, (a, rhs)| {
            b.iter(|| solve_lyapunov(black_box(a), black_box(rhs)))
        });
    }
    group.finish();
}

fn bench_svd(c: &mut Criterion) {
    let mut group = c.benchmark_group("svd");
    for d in SIZES {
        let m = random(&mut ChaCha8Rng::seed_from_u64(d as u64), 2 * d, d);
        group.bench_with_input(BenchmarkId::from_parameter(d), &m, |b, m| b.iter(|| svd(black_box(m))));
    }
    group.finish();
}

fn bench_balance(c: &mut Criterion) {
    let mut group = c.benchmark_group("balance");
    for d in SIZES {
        let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
        let p = SymmetricFactor::from_factor(random(&mut rng, d, d / 2)).unwrap();
        let q = SymmetricFactor::from_factor(random(&mut rng, d, d / 2)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(d), &(p, q), |b, (p, q)| {
            b.iter(|| balance_full(black_box(p), black_box(q)))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_expm, bench_lyapunov, bench_svd, bench_balance);
criterion_main!(benches);
