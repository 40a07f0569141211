use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use swellcast_bench::{coast, tensor};
use swellcast_core::geo::{build_sea_point_set, DEFAULT_STEP_KM};
use swellcast_core::model::{stage1_specs, stage2_specs, ArchConfig};
use swellcast_core::nn::{mse_stage1, Adam, AdamConfig, LayerSpec, Mode, Network};

fn conv(c: &mut Criterion) {
    let mut g = c.benchmark_group("conv3x3");
    for side in [16usize, 32] {
        let mut net = Network::<f32>::build(&[8, side, side], 0, &[LayerSpec::Conv3x3 { channels: 16 }], 1).unwrap();
        let x = tensor(&[32, 8, side, side], 1);
        let gy = tensor(&[32, 16, side, side], 2);
        g.bench_with_input(BenchmarkId::new("forward_backward", side), &side, |b, _| {
            b.iter(|| {
                net.forward(black_box(&x), None, Mode::Train, 0).unwrap();
                net.backward(&gy).unwrap()
            })
        });
    }
    g.finish();
}

fn train_step(c: &mut Criterion) {
    let arch = ArchConfig::default();
    let mut s1 = Network::<f32>::build(&[1, 16, 16], 0, &stage1_specs(16, 16, 7, &arch), 1).unwrap();
    let mut adam1 = Adam::new(AdamConfig::default(), &s1);
    let x1 = tensor(&[64, 1, 16, 16], 3);
    let y1 = tensor(&[64, 7], 4);
    c.bench_function("stage1_train_step_batch64", |b| {
        b.iter(|| {
            let p = s1.forward(&x1, None, Mode::Train, 5).unwrap();
            let (_, g) = mse_stage1(&p, &y1).unwrap();
            s1.backward(&g).unwrap();
            adam1.step(&mut s1);
        })
    });

    let mut s2 = Network::<f32>::build(&[7, 7], 8, &stage2_specs(&arch), 2).unwrap();
    let mut adam2 = Adam::new(AdamConfig::default(), &s2);
    let x2 = tensor(&[64, 7, 7], 6);
    let a2 = tensor(&[64, 8], 7);
    let y2 = tensor(&[64, 1], 8);
    c.bench_function("stage2_train_step_batch64", |b| {
        b.iter(|| {
            let p = s2.forward(&x2, Some(&a2), Mode::Train, 9).unwrap();
            let (_, g) = mse_stage1(&p, &y2).unwrap();
            s2.backward(&g).unwrap();
            adam2.step(&mut s2);
        })
    });
}

fn sea_points(c: &mut Criterion) {
    let mut g = c.benchmark_group("sea_point_set");
    g.sample_size(10);
    for side in [16usize, 32] {
        let (grid, mask, target) = coast(side, side);
        g.bench_with_input(BenchmarkId::from_parameter(side), &side, |b, _| {
            b.iter(|| build_sea_point_set(&grid, &mask, target, DEFAULT_STEP_KM).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, conv, train_step, sea_points);
criterion_main!(benches);
