use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use coopvod::scenario::build_world;
use coopvod::{classify, run_on_trace, zipf_weights, RunMode, VideoId};
use coopvod_bench::{fixture, scenario};

fn bench_zipf(c: &mut Criterion) {
    let mut group = c.benchmark_group("zipf_weights");
    for n in [1_000usize, 100_000] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| zipf_weights(black_box(n), 0.986))
        });
    }
    group.finish();
}

fn bench_placement(c: &mut Criterion) {
    let cfg = scenario(0.0);
    c.bench_function("build_world/default", |b| {
        b.iter(|| build_world(black_box(&cfg), RunMode::Cooperative))
    });
}

fn bench_classify(c: &mut Criterion) {
    let cfg = scenario(0.0);
    let (world, _) = fixture(&cfg, RunMode::Cooperative);
    let view = world.cache_view();
    c.bench_function("classify/all_proxies_first_100", |b| {
        b.iter(|| {
            for p in world.topology.proxies() {
                for v in 1..=100 {
                    black_box(classify(p, VideoId(v), view, &world.topology));
                }
            }
        })
    });
}

fn bench_run(c: &mut Criterion) {
    let mut group = c.benchmark_group("run");
    group.sample_size(10);
    for mode in [RunMode::Cooperative, RunMode::SingleProxy] {
        let cfg = scenario(1000.0);
        let (world, trace) = fixture(&cfg, mode);
        group.throughput(Throughput::Elements(trace.len() as u64));
        group.bench_function(format!("{mode:?}/60k"), |b| {
            b.iter(|| run_on_trace(&cfg, &world, black_box(&trace)))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_zipf, bench_placement, bench_classify, bench_run);
criterion_main!(benches);
