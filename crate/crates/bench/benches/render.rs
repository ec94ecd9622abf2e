use criterion::{criterion_group, criterion_main, Criterion};
use objfield::render::{render, RenderOptions};
use objfield_bench::single_object;

fn render_128(c: &mut Criterion) {
    let (model, scene, camera) = single_object(0, 128, 128).unwrap();
    let options = RenderOptions::new(32);
    let mut group = c.benchmark_group("render");
    group.sample_size(20);
    group.bench_function("128x128_32_samples_single_object", |b| {
        b.iter(|| render(&model, &scene, &camera, &options).unwrap())
    });
    group.finish();
}

criterion_group!(benches, render_128);
criterion_main!(benches);
