use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use symphony_bench::{active_graph, scores};
use symphony_core::{gate_logits_first, gate_softmax_first, topk_select, TieRule, Truncation};

const M: usize = 16;
const K: usize = 2;

fn gating(c: &mut Criterion) {
    let mut group = c.benchmark_group("gating");
    let graph = active_graph(M, K, 1);
    let mut training = graph.clone();
    training.set_frozen(false);
    for n in [256usize, 1024, 4096] {
        let s = scores(n, M, n as u64);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::new("softmax_first", n), &s, |b, s| {
            b.iter(|| gate_softmax_first(black_box(s), K, Truncation::Raw).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("logits_first", n), &s, |b, s| {
            b.iter(|| gate_logits_first(black_box(s), K).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("smoothed", n), &s, |b, s| {
            b.iter(|| graph.route(black_box(s), K, Truncation::Raw).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("smoothed_and_counted", n), &s, |b, s| {
            b.iter(|| {
                let r = training.route_and_count(black_box(s), K, Truncation::Raw).unwrap();
                training.normalize_and_ema().unwrap();
                r
            })
        });
    }
    group.finish();
}

fn topk(c: &mut Criterion) {
    let mut group = c.benchmark_group("topk");
    for m in [16usize, 64, 256] {
        let row: Vec<f64> = scores(1, m, 7).0.row(0).to_vec();
        for k in [1usize, 2, 8] {
            group.bench_with_input(BenchmarkId::new(format!("M{m}"), k), &k, |b, &k| {
                b.iter(|| topk_select(black_box(&row), k, TieRule::LowestIndex).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, gating, topk);
criterion_main!(benches);
