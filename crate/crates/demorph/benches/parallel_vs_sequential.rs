//! Compares the rayon data-parallel core against the sequential fallback.
//!
//! The sequential numbers come from compiling this bench with
//! `--no-default-features` (which drops the `parallel` feature); the bench
//! names embed the active mode so the two runs can be compared side by side:
//!
//! ```text
//! cargo bench --bench parallel_vs_sequential
//! cargo bench --bench parallel_vs_sequential --no-default-features
//! ```

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use demorph::imaging::{render_bonafide, IdentityParams, ImageTensor};
use demorph::nets::{init_params, NetworkConfig};
use demorph::ops::conv::Conv2d;
use demorph::tensor::Tensor;

const MODE: &str = if cfg!(feature = "parallel") {
    "parallel"
} else {
    "sequential"
};

fn bench_conv_forward(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let conv = Conv2d::new(16, 32, 3, 1, 1, &mut rng);
    let x = Tensor::full(&[8, 16, 32, 32], 0.5);
    c.bench_with_input(
        BenchmarkId::new("conv2d_forward_8x16x32x32", MODE),
        &x,
        |b, x| b.iter(|| conv.forward(x)),
    );
}

fn bench_conv_backward(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let conv = Conv2d::new(16, 32, 3, 1, 1, &mut rng);
    let x = Tensor::full(&[8, 16, 32, 32], 0.5);
    let dy = Tensor::full(&[8, 32, 32, 32], 0.01);
    c.bench_function(
        &format!("conv2d_backward_8x16x32x32/{MODE}"),
        |b| {
            b.iter_batched(
                || conv.clone(),
                |mut conv| conv.backward(&x, &dy),
                criterion::BatchSize::SmallInput,
            )
        },
    );
}

fn bench_decomposer_eval(c: &mut Criterion) {
    let cfg = NetworkConfig::desk(3, 1);
    let (dec, _) = init_params(&cfg, 7).unwrap();
    let imgs: Vec<ImageTensor> = (0..4)
        .map(|i| render_bonafide(&IdentityParams::new(i + 1), 0, 64).unwrap())
        .collect();
    let refs: Vec<&ImageTensor> = imgs.iter().collect();
    let batch = ImageTensor::batch(&refs);
    c.bench_function(&format!("decomposer_eval_batch4_64/{MODE}"), |b| {
        b.iter(|| dec.forward_eval(&batch).unwrap())
    });
}

fn bench_dataset_generation(c: &mut Criterion) {
    c.bench_function(&format!("generate_dataset_6id_64/{MODE}"), |b| {
        b.iter(|| demorph::imaging::generate_dataset(6, 2, &[0.5], 64, 3).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_conv_forward, bench_conv_backward, bench_decomposer_eval, bench_dataset_generation
}
criterion_main!(benches);
