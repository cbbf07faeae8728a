//! Wall-clock comparison of the data-parallel and sequential execution paths.
//!
//! The execution strategy is chosen at compile time by the `parallel`
//! feature, so run the suite twice and compare the recorded entries:
//!
//! ```text
//! cargo bench -p reachcert
//! cargo bench -p reachcert --no-default-features
//! ```

use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reachcert::benchmarks;
use reachcert::certificate::Certificate;
use reachcert::conditions::{ConditionId, ConditionInstance, Role, Scalars};
use reachcert::oracle;
use reachcert::verifier::{self, VerifySettings};

const MODE: &str = if cfg!(feature = "parallel") { "parallel" } else { "sequential" };

/// Full grid sweep of the four Bellman-style clauses on ex3 with an 8x8
/// network certificate: cell enumeration, Lipschitz bounds, and quadrature.
fn verify_sweep(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let h = Certificate::network(&[2, 8, 8, 1], &mut rng, 1.0).unwrap();
    let instance = ConditionInstance::new(
        ConditionId::Bc4,
        benchmarks::ex3(),
        BTreeMap::from([(Role::H, h)]),
        Scalars::default().with_p(0.6).with_lambda(0.9999),
        None,
    )
    .unwrap();
    let settings = VerifySettings { resolution: 0.05, ..VerifySettings::default() };
    let mut group = c.benchmark_group("verify_sweep");
    group.sample_size(10);
    group.bench_function(BenchmarkId::from_parameter(MODE), |b| {
        b.iter(|| {
            let verdict = verifier::verify(black_box(&instance), &settings).unwrap();
            black_box(verdict.residual_evals)
        })
    });
    group.finish();
}

/// 20k random-walk trajectories, each independently seeded.
fn monte_carlo_batch(c: &mut Criterion) {
    let problem = benchmarks::walk_1d();
    let mut group = c.benchmark_group("monte_carlo_batch");
    group.sample_size(20);
    group.bench_function(BenchmarkId::from_parameter(MODE), |b| {
        b.iter(|| {
            let estimate =
                oracle::estimate_reach_avoid(black_box(&problem), &[0.0], 20_000, 200, 0.01, 42)
                    .unwrap();
            black_box(estimate.p_hat)
        })
    });
    group.finish();
}

criterion_group!(benches, verify_sweep, monte_carlo_batch);
criterion_main!(benches);
