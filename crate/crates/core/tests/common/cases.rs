//! Gradient-check cases shared by the per-op tests and the acceptance run.

use poolnet::model::{ModelConfig, PoolNet};
use poolnet::train::{balanced_bce_loss, bce_loss};
use poolnet::Tensor;
use rand::Rng;

use super::{grad_check, numeric_derivative, param, probe, relative_error, rng, uniform, GradReport};

pub type Case = (&'static str, GradReport);

pub fn conv() -> Vec<Case> {
    let x = param([2, 3, 8, 8], 1);
    let w = param([4, 3, 3, 3], 2);
    let b = param([1, 4, 1, 1], 3);
    let padded = grad_check(&[x, w, b], 120, 9, |t| probe(&t[0].conv2d(&t[1], Some(&t[2]), 1, 1).unwrap(), 4));

    let x = param([1, 2, 7, 7], 5);
    let w = param([3, 2, 3, 3], 6);
    let strided = grad_check(&[x, w], 100, 9, |t| probe(&t[0].conv2d(&t[1], None, 2, 0).unwrap(), 7));

    // scalar-sum loss, every one of the 108 weight entries.
    let x = param([2, 3, 8, 8], 11);
    let w = param([4, 3, 3, 3], 12);
    let all_weights = grad_check(&[w, x], 108, 1, |t| t[1].conv2d(&t[0], None, 1, 1).unwrap().sum());
    vec![("conv2d", padded), ("conv2d stride 2", strided), ("conv2d all weights", all_weights)]
}

pub fn pooling() -> Vec<Case> {
    let x = param([1, 2, 8, 8], 21);
    vec![
        ("avg_pool2d", grad_check(&[x.clone()], 128, 1, |t| probe(&t[0].avg_pool2d(4).unwrap(), 22))),
        ("adaptive 3x3", grad_check(&[x.clone()], 128, 1, |t| probe(&t[0].adaptive_avg_pool2d(3, 3).unwrap(), 23))),
        ("adaptive 5x7", grad_check(&[x.clone()], 128, 1, |t| probe(&t[0].adaptive_avg_pool2d(5, 7).unwrap(), 24))),
        (
            "adaptive upscale 11x9",
            grad_check(&[x.clone()], 128, 1, |t| probe(&t[0].adaptive_avg_pool2d(11, 9).unwrap(), 28)),
        ),
        ("global_avg_pool", grad_check(&[x.clone()], 128, 1, |t| probe(&t[0].global_avg_pool(), 25))),
        ("max_pool2d", grad_check(&[x], 128, 1, |t| probe(&t[0].max_pool2d(2).unwrap(), 26))),
    ]
}

pub fn resize() -> Vec<Case> {
    let x = param([2, 2, 6, 6], 31);
    let y = param([2, 2, 6, 6], 33);
    vec![
        ("upsample x2", grad_check(&[x.clone()], 128, 1, |t| probe(&t[0].upsample_bilinear(2).unwrap(), 32))),
        ("upsample x4", grad_check(&[x.clone()], 128, 1, |t| probe(&t[0].upsample_bilinear(4).unwrap(), 32))),
        ("upsample x8", grad_check(&[x], 128, 1, |t| probe(&t[0].upsample_bilinear(8).unwrap(), 32))),
        ("resize 6->4", grad_check(&[y.clone()], 128, 1, |t| probe(&t[0].resize_bilinear(4, 4).unwrap(), 34))),
        ("resize 6->9x5", grad_check(&[y], 128, 1, |t| probe(&t[0].resize_bilinear(9, 5).unwrap(), 35))),
    ]
}

pub fn elementwise() -> Vec<Case> {
    let a = param([1, 3, 6, 6], 41);
    let b = param([1, 3, 6, 6], 42);
    let c = param([1, 2, 6, 6], 43);
    vec![
        ("relu", grad_check(&[a.clone()], 108, 1, |t| probe(&t[0].relu(), 44))),
        ("sigmoid", grad_check(&[a.clone()], 108, 1, |t| probe(&t[0].sigmoid(), 45))),
        ("add", grad_check(&[a.clone(), b.clone()], 108, 1, |t| probe(&t[0].add(&t[1]).unwrap(), 46))),
        ("mul", grad_check(&[a.clone(), b], 108, 1, |t| probe(&t[0].mul(&t[1]).unwrap(), 47))),
        (
            "concat",
            grad_check(&[a.clone(), c], 108, 1, |t| probe(&Tensor::concat_channels(&[&t[0], &t[1]]).unwrap(), 48)),
        ),
        ("hflip", grad_check(&[a], 108, 1, |t| probe(&t[0].hflip(), 49))),
    ]
}

pub fn chain() -> Vec<Case> {
    let x = param([1, 2, 6, 6], 51);
    let w1 = param([3, 2, 3, 3], 52);
    let w2 = param([2, 3, 3, 3], 53);
    let r = grad_check(&[x, w1, w2], 100, 2, |t| {
        t[0].conv2d(&t[1], None, 1, 1).unwrap().relu().conv2d(&t[2], None, 1, 1).unwrap().sigmoid().sum()
    });
    vec![("conv-relu-conv-sigmoid", r)]
}

pub fn losses() -> Vec<Case> {
    let shape = [1, 1, 12, 12];
    let logits = Tensor::parameter(shape, uniform(shape, 61).iter().map(|v| 4.0 * v).collect()).unwrap();
    let soft = Tensor::new(shape, uniform(shape, 62).iter().map(|v| 0.5 + 0.5 * v).collect()).unwrap();
    let mut r = rng(63);
    let binary = Tensor::new(shape, (0..144).map(|_| (r.gen::<f64>() < 0.2) as u8 as f64).collect()).unwrap();
    vec![
        ("bce_loss", grad_check(&[logits.clone()], 144, 1, |t| bce_loss(&t[0], &soft).unwrap())),
        ("balanced_bce_loss", grad_check(&[logits], 144, 1, |t| balanced_bce_loss(&t[0], &binary).unwrap())),
    ]
}

/// Every parameter of the full model with edge branch (a few coordinates
/// each) plus input pixels, through a probe of all outputs.
pub fn model(per_param: usize) -> Case {
    let cfg = ModelConfig::tiny(4).with_edge(true);
    let mut model = PoolNet::<f64>::new(&cfg, 3).unwrap();
    // Zero biases put ReLUs exactly on their kink wherever the input is zero;
    // random biases move the check to a differentiable point.
    let biases: Vec<_> = model.params().ids().filter(|&id| model.params().name(id).ends_with(".bias")).collect();
    for (k, id) in biases.into_iter().enumerate() {
        let n = model.params().get(id).numel();
        let values = uniform([1, 1, 1, n], 90 + k as u64).iter().map(|v| 0.1 * v).collect();
        model.params_mut().replace_values(id, values).unwrap();
    }
    let shape = [1, 3, 32, 32];
    let image = Tensor::parameter(shape, uniform(shape, 70).iter().map(|v| 0.5 + 0.5 * v).collect()).unwrap();

    let loss_of = |m: &PoolNet<f64>, x: &Tensor<f64>| {
        let out = m.forward(x).unwrap();
        let mut l = probe(&out.saliency_logits, 71);
        for (k, e) in out.edge_logits.unwrap().iter().enumerate() {
            l = l.add(&probe(e, 72 + k as u64)).unwrap();
        }
        l
    };

    model.params().zero_grad();
    loss_of(&model, &image).backward().unwrap();

    let mut r = rng(80);
    let mut report = GradReport { checked: 0, max_rel: 0.0, worst: String::new() };
    let mut record = |what: String, analytic: f64, numeric: f64| {
        let rel = relative_error(analytic, numeric);
        report.checked += 1;
        if rel > report.max_rel {
            report.max_rel = rel;
            report.worst = format!("{what}: analytic {analytic} numeric {numeric}");
        }
    };

    for id in model.params().ids() {
        let t = model.params().get(id);
        let grad = t.grad().unwrap_or_else(|| vec![0.0; t.numel()]);
        let n = t.numel();
        for _ in 0..per_param.min(n) {
            let i = r.gen_range(0..n);
            let eval = |delta: f64| {
                let mut m = model.clone();
                let mut data = t.to_f64_vec();
                data[i] += delta;
                m.params_mut().replace_values(id, data).unwrap();
                loss_of(&m, &image).item()
            };
            let numeric = numeric_derivative(eval);
            record(format!("{}[{i}]", model.params().name(id)), grad[i], numeric);
        }
    }

    let g = image.grad().unwrap();
    for _ in 0..32 {
        let i = r.gen_range(0..image.numel());
        let eval = |delta: f64| {
            let mut data = image.to_f64_vec();
            data[i] += delta;
            loss_of(&model, &Tensor::new(shape, data).unwrap()).item()
        };
        let numeric = numeric_derivative(eval);
        record(format!("image[{i}]"), g[i], numeric);
    }
    ("end-to-end model 1x3x32x32", report)
}
