use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use wmmf::allocation::{oracle_allocate, wmmf_allocate};
use wmmf_bench::{random_counts, random_topology};

fn progressive_filling(c: &mut Criterion) {
    let mut group = c.benchmark_group("wmmf_allocate");
    for (links, routes) in [(3, 4), (10, 30), (40, 200)] {
        let topology = random_topology(links, routes, 7);
        let z = random_counts(routes, 5, 7);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{links}x{routes}")), &z, |b, z| {
            b.iter(|| wmmf_allocate(black_box(&topology), black_box(z)).unwrap())
        });
    }
    group.finish();
}

fn bisection_oracle(c: &mut Criterion) {
    let topology = random_topology(3, 4, 7);
    let z = random_counts(4, 3, 7);
    c.bench_function("oracle_allocate/3x4", |b| {
        b.iter(|| oracle_allocate(black_box(&topology), black_box(&z)).unwrap())
    });
}

criterion_group!(benches, progressive_filling, bisection_oracle);
criterion_main!(benches);
