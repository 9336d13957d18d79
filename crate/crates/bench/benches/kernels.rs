use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ebmrec_bench::{measurement, params, phantom};
use ebmrec_core::energy_net::{grad_input, NetInput};
use ebmrec_core::kspace::{dc_project_multicoil, dc_project_single};
use ebmrec_core::numerics::fft2;
use ebmrec_core::sampler::langevin_step;
use ebmrec_core::RandomStream;

fn bench_fft(c: &mut Criterion) {
    let mut group = c.benchmark_group("fft2");
    for size in [64, 128, 256] {
        let x = phantom(size);
        group.bench_with_input(BenchmarkId::from_parameter(size), &x, |b, x| b.iter(|| fft2(black_box(x)).unwrap()));
    }
    group.finish();
}

fn bench_grad_input(c: &mut Criterion) {
    let mut group = c.benchmark_group("grad_input");
    group.sample_size(20);
    let p = params(&[8, 16, 16]);
    for size in [16, 64] {
        let input = NetInput::new(phantom(size).to_channels(0), 0.1);
        group.bench_with_input(BenchmarkId::from_parameter(size), &input, |b, input| {
            b.iter(|| grad_input(&p, black_box(input)).unwrap())
        });
    }
    group.finish();
}

fn bench_langevin(c: &mut Criterion) {
    let p = params(&[8, 16, 16]);
    let x = phantom(64).to_channels(0);
    let mut stream = RandomStream::new(1, 0);
    c.bench_function("langevin_step/64", |b| {
        b.iter(|| langevin_step(&p, black_box(&x), 1e-4, 0.05, &mut stream).unwrap())
    });
}

fn bench_dc(c: &mut Criterion) {
    let (x, y, _) = measurement(64, 1);
    c.bench_function("dc_project_single/64", |b| b.iter(|| dc_project_single(black_box(&x), &y, 0.1).unwrap()));
    let (x, y, sens) = measurement(64, 4);
    let sens = sens.unwrap();
    c.bench_function("dc_project_multicoil/64x4", |b| {
        b.iter(|| dc_project_multicoil(black_box(&x), &y, &sens, 0.1, 1e-8, 200).unwrap())
    });
}

criterion_group!(benches, bench_fft, bench_grad_input, bench_langevin, bench_dc);
criterion_main!(benches);
