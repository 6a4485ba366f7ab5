use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use wnnstab::gnn::forward;
use wnnstab::{decompose, deterministic_graph, eigenvalues, stochastic_graph, Graphon, Scale};
use wnnstab_bench::ForwardFixture;

fn spectra(c: &mut Criterion) {
    let w = Graphon::smooth_exp(1.0).unwrap();
    let mut group = c.benchmark_group("spectra");
    group.sample_size(10);
    for n in [128, 256, 512] {
        let g = deterministic_graph(&w, n).unwrap();
        group.bench_with_input(BenchmarkId::new("decompose", n), &g, |b, g| {
            b.iter(|| decompose(black_box(g.gso()), Scale::Graphon).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("eigenvalues", n), &g, |b, g| {
            b.iter(|| eigenvalues(black_box(g.gso()), Scale::Graphon).unwrap())
        });
    }
    group.finish();
}

fn gnn(c: &mut Criterion) {
    let mut group = c.benchmark_group("gnn_forward");
    group.sample_size(20);
    for n in [128, 512] {
        let fx = ForwardFixture::new(n).unwrap();
        group.bench_with_input(BenchmarkId::new("poly", n), &n, |b, _| {
            b.iter(|| forward(&fx.poly, &fx.op, black_box(&fx.x)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("band", n), &n, |b, _| {
            b.iter(|| forward(&fx.band, &fx.op, black_box(&fx.x)).unwrap())
        });
    }
    group.finish();
}

fn sampling(c: &mut Criterion) {
    let w = Graphon::two_block(0.8, 0.2).unwrap();
    let mut group = c.benchmark_group("stochastic_graph");
    for n in [256, 1024] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| stochastic_graph(&w, n, black_box(7)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, spectra, gnn, sampling);
criterion_main!(benches);
