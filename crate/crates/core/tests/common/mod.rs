#![allow(dead_code)]

pub mod cases;
pub mod oracles;

use poolnet::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Denominator floor so coordinates whose true gradient is ~0 are judged on
/// absolute error instead of amplifying round-off.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: [usize; 4], seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..shape.iter().product::<usize>()).map(|_| r.gen_range(-1.0..1.0)).collect()
}

pub fn param(shape: [usize; 4], seed: u64) -> Tensor<f64> {
    Tensor::parameter(shape, uniform(shape, seed)).unwrap()
}

/// Central difference of `eval` at zero. A ReLU or max-pool switch within
/// the step makes the estimate step-dependent, so the step shrinks until two
/// successive estimates agree up to round-off.
pub fn numeric_derivative(eval: impl Fn(f64) -> f64) -> f64 {
    let central = |h: f64| (eval(h) - eval(-h)) / (2.0 * h);
    let mut prev = central(FD_STEP);
    let mut h = FD_STEP;
    for _ in 0..2 {
        h /= 10.0;
        let next = central(h);
        // Round-off in the loss difference grows like 1/h.
        let allowance = 1e-5 * prev.abs().max(next.abs()) + 1e-14 / h;
        if (prev - next).abs() <= allowance {
            return prev;
        }
        prev = next;
    }
    prev
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug)]
pub struct GradReport {
    pub checked: usize,
    pub max_rel: f64,
    pub worst: String,
}

/// Compares backprop gradients with central differences.
///
/// `f` maps the current input tensors to a scalar loss. Up to `per_input`
/// coordinates of every input are checked (all of them when smaller).
pub fn grad_check(
    inputs: &[Tensor<f64>],
    per_input: usize,
    seed: u64,
    f: impl Fn(&[Tensor<f64>]) -> Tensor<f64>,
) -> GradReport {
    inputs.iter().for_each(|t| t.zero_grad());
    let loss = f(inputs);
    loss.backward().unwrap();
    let analytic: Vec<Vec<f64>> = inputs
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();

    let mut r = rng(seed);
    let mut report = GradReport { checked: 0, max_rel: 0.0, worst: String::new() };
    for (k, t) in inputs.iter().enumerate() {
        let n = t.numel();
        let coords: Vec<usize> = if n <= per_input {
            (0..n).collect()
        } else {
            (0..per_input).map(|_| r.gen_range(0..n)).collect()
        };
        for i in coords {
            let eval = |delta: f64| {
                let mut data = t.to_f64_vec();
                data[i] += delta;
                let mut perturbed = inputs.to_vec();
                perturbed[k] = Tensor::parameter(t.shape(), data).unwrap();
                f(&perturbed).item()
            };
            let numeric = numeric_derivative(eval);
            let rel = relative_error(analytic[k][i], numeric);
            report.checked += 1;
            if rel > report.max_rel {
                report.max_rel = rel;
                report.worst = format!("input {k} coord {i}: analytic {} numeric {numeric}", analytic[k][i]);
            }
        }
    }
    report
}

/// `sum(x ⊙ r)` with a fixed random `r`, so every output element carries a
/// distinct upstream gradient.
pub fn probe(x: &Tensor<f64>, seed: u64) -> Tensor<f64> {
    let r = Tensor::new(x.shape(), uniform(x.shape(), seed)).unwrap();
    x.mul(&r).unwrap().sum()
}
