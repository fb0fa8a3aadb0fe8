use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;

use netvol::corrnet::{graph_sequence, pearson_rows, GraphConfig};
use netvol::gae::{split_edges, train, GaeHyper};
use netvol::ingest::log_returns;
use netvol::metrics::{auroc, ScoredLabels};
use netvol::synthgen::{generate, planted_partition, Scenario};

/// Deterministic pseudo-noise so the benches need no RNG crate.
fn wiggle(i: usize, j: usize) -> f64 {
    ((i * 7919 + j * 104_729) % 1009) as f64 / 1009.0 - 0.5
}

fn correlation(c: &mut Criterion) {
    let mut group = c.benchmark_group("pearson_rows");
    for n in [60, 250, 500] {
        let x = Array2::from_shape_fn((n, 390), |(i, t)| wiggle(i, t) + 0.3 * wiggle(i % 10, t));
        group.bench_with_input(BenchmarkId::from_parameter(n), &x, |b, x| b.iter(|| pearson_rows(black_box(x.view()))));
    }
    group.finish();
}

fn graphs(c: &mut Criterion) {
    let scenario = Scenario { days: 30, schedule: vec![(0, 1), (20, 2)], ..Scenario::default() };
    let returns = log_returns(&generate(&scenario).unwrap().panel, false).unwrap();
    c.bench_function("graph_sequence 60 tickers x 30 days", |b| {
        b.iter(|| graph_sequence(black_box(&returns), &GraphConfig::default()).unwrap())
    });
}

fn gae(c: &mut Criterion) {
    let g = planted_partition(4, 15, 0.9, 0.05, 8, 0.2, 1).unwrap();
    let hyper = GaeHyper { max_epochs: 50, patience: 50, ..GaeHyper::default() };
    let split = split_edges(&g, hyper.split, 1).unwrap();
    c.bench_function("gae train 60 nodes x 50 epochs", |b| b.iter(|| train(black_box(&g), &split, &hyper).unwrap()));
}

fn ranking(c: &mut Criterion) {
    let n = 20_000;
    let scores: Vec<f64> = (0..n).map(|i| (wiggle(i, 3) * 50.0).round()).collect();
    let labels: Vec<bool> = (0..n).map(|i| wiggle(i, 11) > 0.0).collect();
    let data = ScoredLabels::new(scores, labels).unwrap();
    c.bench_function("auroc 20k tied scores", |b| b.iter(|| auroc(black_box(&data))));
}

criterion_group!(benches, correlation, graphs, gae, ranking);
criterion_main!(benches);
