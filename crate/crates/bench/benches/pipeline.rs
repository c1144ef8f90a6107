use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use onsd_bench::fixture;
use onsd_core::detection::detect_classical;
use onsd_core::lca::{lca_encode, Dictionary, LcaParams};
use onsd_core::phantom::render_phantom_frame;
use onsd_core::pipeline::measure_frame;
use onsd_core::ClassicalSegmenter;

fn phantom(c: &mut Criterion) {
    let (spec, _, _) = fixture();
    c.bench_function("render_phantom_frame", |b| {
        b.iter(|| render_phantom_frame(black_box(&spec), 3))
    });
}

fn width_system(c: &mut Criterion) {
    let (_, frame, _) = fixture();
    c.bench_function("detect_classical", |b| {
        b.iter(|| detect_classical(black_box(&frame), 0))
    });
    let det = detect_classical(&frame, 0);
    let seg = ClassicalSegmenter::default();
    c.bench_function("measure_frame", |b| {
        b.iter(|| measure_frame(black_box(&frame), &det, &seg))
    });
}

fn sparse_coding(c: &mut Criterion) {
    let (_, _, region) = fixture();
    let d = Dictionary::random(32, 8, 0).expect("valid dictionary");
    let params = LcaParams::default();
    c.bench_function("lca_encode_32x8", |b| {
        b.iter(|| lca_encode(black_box(&region), &d, &params))
    });
}

criterion_group!(benches, phantom, width_system, sparse_coding);
criterion_main!(benches);
