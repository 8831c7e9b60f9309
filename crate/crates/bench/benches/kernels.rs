use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use vair_bench::{lcg_cloud, shell_field};
use vair_core::eval::{chamfer_l1, iou, IouKind};
use vair_core::glo::{Decoder, GloConfig};
use vair_core::{marching_cubes, voxelize, Aabb, Vec3};

fn decoder(c: &mut Criterion) {
    let cfg = GloConfig::default();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let dec = Decoder::init(cfg.scene_arch(), &mut rng).unwrap();
    let z = vec![0.01; cfg.scene_latent];
    let mut g = c.benchmark_group("decoder_32");
    g.sample_size(10);
    g.bench_function("forward", |b| b.iter(|| dec.forward(black_box(&z)).unwrap()));
    let acts = dec.forward_cached(&z).unwrap();
    let dout = vec![1.0; acts.out.len()];
    let mut dp = vec![0.0; dec.num_params()];
    let mut dz = vec![0.0; z.len()];
    g.bench_function("backward", |b| {
        b.iter(|| dec.backward(black_box(&z), &acts, &dout, &mut dp, &mut dz))
    });
    g.bench_function("backward_latent", |b| {
        b.iter(|| dec.backward_latent(black_box(&z), &acts, &dout, &mut dz))
    });
    g.finish();
}

fn trilinear(c: &mut Criterion) {
    let f = shell_field(32, 0.6, 0.1);
    let pts: Vec<Vec3> = lcg_cloud(10_000, 2).points.iter().map(|p| p / 1.5 - Vec3::repeat(1.0)).collect();
    c.bench_function("trilinear_10k", |b| {
        b.iter(|| pts.iter().map(|p| f.trilinear_sample(p)).sum::<f64>())
    });
}

fn metrics(c: &mut Criterion) {
    let bounds = Aabb::new(Vec3::zeros(), Vec3::repeat(3.0)).unwrap();
    let mut g = c.benchmark_group("metrics");
    for n in [1_000usize, 10_000] {
        let a = lcg_cloud(n, 3);
        let bcl = lcg_cloud(n, 4);
        g.bench_with_input(BenchmarkId::new("chamfer_l1", n), &n, |b, _| {
            b.iter(|| chamfer_l1(black_box(&a), black_box(&bcl)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("voxel_iou_64", n), &n, |b, _| {
            b.iter(|| {
                let va = voxelize(&a, 64, bounds).unwrap();
                let vb = voxelize(&bcl, 64, bounds).unwrap();
                iou(&va, &vb, IouKind::MaskedRecall).unwrap()
            })
        });
    }
    g.finish();
}

fn iso_surface(c: &mut Criterion) {
    let f = shell_field(64, 0.6, 0.1);
    c.bench_function("marching_cubes_64", |b| b.iter(|| marching_cubes(black_box(&f), 50.0)));
}

criterion_group!(benches, decoder, trilinear, metrics, iso_surface);
criterion_main!(benches);
