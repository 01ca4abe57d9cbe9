use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pushsum_bench::fixture;
use pushsum_core::bounds::certify_contraction;
use pushsum_core::graph::certify_connectivity;
use pushsum_core::pushsum::transition_product_w;
use std::hint::black_box;

fn products(c: &mut Criterion) {
    let mut group = c.benchmark_group("products");
    for n in [5, 10] {
        let (seq, ws) = fixture(n, 500);
        group.bench_with_input(BenchmarkId::new("transition_product_w/100", n), &n, |b, _| {
            b.iter(|| transition_product_w(black_box(&ws), 0, 100).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("certify_contraction/500", n), &n, |b, _| {
            b.iter(|| certify_contraction(black_box(&ws)))
        });
        group.bench_with_input(BenchmarkId::new("connectivity_window/500", n), &n, |b, _| {
            b.iter(|| certify_connectivity(black_box(&seq)))
        });
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = products
}
criterion_main!(benches);
