use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pushsum_bench::{fixture, ramp};
use pushsum_core::pushsum::{pushsum_step, NetworkState};
use pushsum_core::subgradient::{pushsub_step, BoxRegion, LocalObjective, Objective};
use std::hint::black_box;

fn steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    for n in [5, 20, 50] {
        let (_, ws) = fixture(n, 1);
        let state = NetworkState::initial(ramp(n, 2));
        group.bench_with_input(BenchmarkId::new("pushsum", n), &n, |b, _| {
            b.iter(|| pushsum_step(black_box(&state), &ws[0]).unwrap())
        });
        let terms = (0..n)
            .map(|i| LocalObjective::L1 {
                center: vec![i as f64, -(i as f64)],
            })
            .collect();
        let region = BoxRegion { lo: -100.0, hi: 100.0 };
        let objective = Objective::new(2, terms, region, None, None).unwrap();
        group.bench_with_input(BenchmarkId::new("pushsub", n), &n, |b, _| {
            b.iter(|| pushsub_step(black_box(&state), &ws[0], 0.1, &objective).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, steps);
criterion_main!(benches);
