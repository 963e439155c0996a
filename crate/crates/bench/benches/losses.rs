use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use onseg_bench::workload;
use onseg_core::decode::{offline_decode, online_decode_full};
use onseg_core::energy::{loss_total, LossConfig};

fn losses(c: &mut Criterion) {
    let w = workload(500, 10, 5, 6, 4);
    let path = offline_decode(&w.anchor, &w.durations, &w.grammar, None).unwrap().path;
    let online = online_decode_full(&w.anchor, &w.durations, &w.grammar).unwrap().paths;
    let lp = w.anchor.log_posteriors();
    let with = LossConfig::default();
    let without = LossConfig {
        use_oodl: false,
        ..with
    };
    c.bench_function("loss_baseline/500", |b| {
        b.iter(|| loss_total(black_box(&lp), &path, None, &without).unwrap())
    });
    c.bench_function("loss_total_oodl/500", |b| {
        b.iter(|| loss_total(black_box(&lp), &path, Some(&online), &with).unwrap())
    });
}

criterion_group!(benches, losses);
criterion_main!(benches);
