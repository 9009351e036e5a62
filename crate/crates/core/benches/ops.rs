use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use poolnet::model::{ModelConfig, PoolNet};
use poolnet::{par, Tensor};

fn input(shape: [usize; 4]) -> Tensor<f32> {
    Tensor::from_fn(shape, |i| ((i * 7919) % 997) as f32 / 997.0 - 0.5)
}

fn thread_counts() -> Vec<usize> {
    let all = std::thread::available_parallelism().map_or(1, |n| n.get());
    if all > 1 {
        vec![1, all]
    } else {
        vec![1]
    }
}

fn conv(c: &mut Criterion) {
    let x = input([1, 64, 64, 64]);
    let w = input([64, 64, 3, 3]);
    let mut g = c.benchmark_group("conv3x3_64ch_64px");
    for t in thread_counts() {
        g.bench_with_input(BenchmarkId::from_parameter(t), &t, |b, &t| {
            b.iter(|| par::with_threads(t, || x.conv2d(&w, None, 1, 1).unwrap()))
        });
    }
    g.finish();
}

fn forward(c: &mut Criterion) {
    let model = PoolNet::<f32>::new(&ModelConfig::desk(), 0).unwrap();
    let x = input([1, 3, 128, 128]);
    let mut g = c.benchmark_group("forward_desk_128px");
    g.sample_size(10);
    for t in thread_counts() {
        g.bench_with_input(BenchmarkId::from_parameter(t), &t, |b, &t| {
            b.iter(|| par::with_threads(t, || model.forward(&x).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, conv, forward);
criterion_main!(benches);
