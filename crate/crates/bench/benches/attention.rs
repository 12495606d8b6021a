use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lrformer_bench::{gfca_forward, vanilla_forward};
use lrformer_core::numerics::fft::rfft;
use lrformer_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const CHANNELS: usize = 16;

fn cross_attention(c: &mut Criterion) {
    let mut group = c.benchmark_group("cross_attention");
    group.sample_size(10);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let b = 1.0 / (CHANNELS as f64).sqrt();
    for n in [256usize, 1024, 2048] {
        let l = Tensor::uniform(&[CHANNELS, n], -1.0, 1.0, &mut rng);
        let u = Tensor::uniform(&[CHANNELS, n], -1.0, 1.0, &mut rng);
        let w: [Tensor; 3] =
            std::array::from_fn(|_| Tensor::uniform(&[CHANNELS, CHANNELS], -b, b, &mut rng));
        group.bench_with_input(BenchmarkId::new("vanilla", n), &n, |bch, _| {
            bch.iter(|| black_box(vanilla_forward(&l, &u, &w).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("gfca", n), &n, |bch, _| {
            bch.iter(|| black_box(gfca_forward(&l, &u, &w, &w, 0.0).unwrap()))
        });
    }
    group.finish();
}

fn packed_fft(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("rfft");
    for n in [256usize, 4096] {
        let x = Tensor::uniform(&[CHANNELS, n], -1.0, 1.0, &mut rng);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bch, _| {
            bch.iter(|| black_box(rfft(&x).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, cross_attention, packed_fft);
criterion_main!(benches);
