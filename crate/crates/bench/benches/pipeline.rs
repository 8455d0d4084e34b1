use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use rankspec::blockmodel::RankMomentEngine;
use rankspec::clustering::{approx_kmeans, spectral_cluster};
use rankspec::experiments::three_family_spec;
use rankspec::linalg::{eigs_topk, symmetric_eigen};
use rankspec::ranks::pass_to_ranks;
use rankspec::{DimensionMode, SeedStream, TieMode};
use rankspec_bench::bench_matrix;

fn ptr(c: &mut Criterion) {
    let mut group = c.benchmark_group("pass_to_ranks");
    for n in [100, 400] {
        let a = bench_matrix(n, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &a, |b, a| {
            b.iter(|| pass_to_ranks(black_box(a), TieMode::Strict).unwrap())
        });
    }
    group.finish();
}

fn eigen(c: &mut Criterion) {
    let mut group = c.benchmark_group("eigen");
    group.sample_size(20);
    for n in [100, 400] {
        let r = pass_to_ranks(&bench_matrix(n, 2), TieMode::Strict).unwrap().into_matrix();
        group.bench_with_input(BenchmarkId::new("full", n), &r, |b, r| b.iter(|| symmetric_eigen(black_box(r)).unwrap()));
        group.bench_with_input(BenchmarkId::new("top2", n), &r, |b, r| b.iter(|| eigs_topk(black_box(r), 2).unwrap()));
    }
    group.finish();
}

fn kmeans(c: &mut Criterion) {
    let r = pass_to_ranks(&bench_matrix(1000, 3), TieMode::Strict).unwrap().into_matrix();
    let points = eigs_topk(&r, 2).unwrap().vectors;
    c.bench_function("approx_kmeans/n1000_k2_restarts10", |b| {
        b.iter(|| approx_kmeans(black_box(&points), 2, 0.05, SeedStream::new(4), 10).unwrap())
    });
}

fn moments(c: &mut Criterion) {
    let spec = three_family_spec(20).unwrap();
    c.bench_function("rank_moments/three_family_b_and_s2", |b| {
        b.iter(|| {
            let engine = RankMomentEngine::for_spec(black_box(&spec)).unwrap();
            (engine.b_tilde(2).unwrap(), engine.s2_tilde(2).unwrap())
        })
    });
}

fn pipeline(c: &mut Criterion) {
    let mut group = c.benchmark_group("spectral_cluster");
    group.sample_size(10);
    let a = bench_matrix(400, 5);
    group.bench_function("ptr_n400_d2", |b| {
        b.iter(|| {
            spectral_cluster(black_box(&a), 2, DimensionMode::Fixed(2), Some(TieMode::Strict), 0.05, 10, SeedStream::new(6)).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, ptr, eigen, kmeans, moments, pipeline);
criterion_main!(benches);
