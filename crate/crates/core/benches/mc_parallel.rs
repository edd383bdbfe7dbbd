use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qram_core::noiselab::{estimate_fidelity_with, query_layout, EstimateSpec, Estimator, Execution, ModelKind};

fn mc(c: &mut Criterion) {
    let mut group = c.benchmark_group("estimate_fidelity");
    group.sample_size(10);
    for n in [64usize, 512] {
        let layout = query_layout(n).unwrap();
        let spec = EstimateSpec {
            n,
            kind: ModelKind::Cd,
            epsilon: 1e-4,
            samples: 256,
            datasets: 32,
            estimator: Estimator::Bound,
            seed: 1,
        };
        for (name, exec) in [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)] {
            group.bench_with_input(BenchmarkId::new(name, n), &spec, |b, s| {
                b.iter(|| estimate_fidelity_with(s, &layout, exec).unwrap());
            });
        }
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("scaling_sweep");
    group.sample_size(10);
    let layouts: Vec<_> = (3..=9).map(|k| query_layout(1 << k).unwrap()).collect();
    for (name, exec) in [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)] {
        group.bench_function(name, |b| {
            b.iter(|| {
                for l in &layouts {
                    let spec = EstimateSpec {
                        n: l.n,
                        kind: ModelKind::Ec,
                        epsilon: 1e-4,
                        samples: 64,
                        datasets: 16,
                        estimator: Estimator::Bound,
                        seed: 2,
                    };
                    estimate_fidelity_with(&spec, l, exec).unwrap();
                }
            });
        });
    }
    group.finish();
}

criterion_group!(benches, mc, sweep);
criterion_main!(benches);
