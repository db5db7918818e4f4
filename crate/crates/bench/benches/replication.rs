use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rla_core::martingale::Sampling;
use rla_core::sim::{run_replication, Condition, CostRule, PopulationSpec};
use rla_core::{ComparatorSpec, EstimatorSpec, ShrinkTrunc, TestConfig};

fn benchmark(c: &mut Criterion) {
    let condition = Condition {
        population: PopulationSpec::binary(0.55, 20_000),
        sampling: Sampling::WithoutReplacement,
        cap: None,
        cost: CostRule::Observed,
    };
    let population = condition.population.materialize(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let cfg = TestConfig::with_replacement(0.05, 1.0, 0.5);
    let alpha = ComparatorSpec::alpha(EstimatorSpec::ShrinkTrunc(ShrinkTrunc::new(0.55, 100.0, &cfg)));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    c.bench_function("run_replication alpha theta=0.55 N=20000", |b| {
        b.iter(|| run_replication(&alpha, &population, &condition, 0.05, &mut rng).unwrap())
    });
    let mix = ComparatorSpec::sq_kelly();
    c.bench_function("run_replication sq_kelly theta=0.55 N=20000", |b| {
        b.iter(|| run_replication(&mix, &population, &condition, 0.05, &mut rng).unwrap())
    });
}

criterion_group!(benches, benchmark);
criterion_main!(benches);
