use coloc_core::batch::{run_batch_sequential, seed_sweep};
use coloc_core::{Estimator, ScenarioConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn sweep(c: &mut Criterion) {
    let base = ScenarioConfig {
        n_steps: 200,
        ..ScenarioConfig::default()
    };
    let estimators = [Estimator::Dr, Estimator::DeEkf];
    let mut group = c.benchmark_group("seed_sweep");
    group.sample_size(10);
    for seeds in [4u64, 16] {
        let jobs = seed_sweep(&base, seeds);
        group.bench_with_input(BenchmarkId::new("sequential", seeds), &jobs, |b, jobs| {
            b.iter(|| run_batch_sequential(jobs, &estimators))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", seeds), &jobs, |b, jobs| {
            b.iter(|| coloc_core::batch::run_batch_parallel(jobs, &estimators))
        });
    }
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
