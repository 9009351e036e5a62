//! Brute-force metric references written straight from the definitions.

use poolnet::metrics::{self, BETA2};
use rand::Rng;

/// F-measure from its reciprocal (weighted-harmonic-mean) form.
pub fn f_measure(p: f64, r: f64, beta2: f64) -> f64 {
    if p == 0.0 || r == 0.0 {
        return 0.0;
    }
    1.0 / ((1.0 / (1.0 + beta2)) / p + (beta2 / (1.0 + beta2)) / r)
}

pub fn mae(s: &[f64], g: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..s.len() {
        acc += (s[i] - g[i]).abs();
    }
    acc / s.len() as f64
}

/// Per-threshold image-averaged (precision, recall) by direct counting.
pub fn pr_sweep(maps: &[(Vec<f64>, Vec<f64>)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for k in 0..256 {
        let t = k as f64 / 255.0;
        let (mut p_sum, mut r_sum, mut r_n) = (0.0, 0.0, 0);
        for (s, g) in maps {
            let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
            for i in 0..s.len() {
                let pred = s[i] >= t;
                let pos = g[i] >= 0.5;
                match (pred, pos) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
            p_sum += if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
            if tp + fn_ > 0 {
                r_sum += tp as f64 / (tp + fn_) as f64;
                r_n += 1;
            }
        }
        let recall = if r_n == 0 { 0.0 } else { r_sum / r_n as f64 };
        out.push((p_sum / maps.len() as f64, recall));
    }
    out
}

/// Precision/recall from pixels pooled across all images.
pub fn pooled_sweep(maps: &[(Vec<f64>, Vec<f64>)]) -> Vec<(f64, f64)> {
    let s: Vec<f64> = maps.iter().flat_map(|m| m.0.clone()).collect();
    let g: Vec<f64> = maps.iter().flat_map(|m| m.1.clone()).collect();
    pr_sweep(&[(s, g)])
}

pub fn max_f(curve: &[(f64, f64)]) -> f64 {
    curve.iter().map(|&(p, r)| f_measure(p, r, 0.3)).fold(0.0, f64::max)
}

/// Random 8×8 map/ground-truth pair. Scores are sometimes snapped to the
/// threshold grid to exercise the inclusive comparison; ground truth is
/// binary, soft, or occasionally empty.
pub fn random_pair<R: Rng>(rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let snap = rng.gen_bool(0.5);
    let s: Vec<f64> = (0..64)
        .map(|_| if snap { rng.gen_range(0..=255) as f64 / 255.0 } else { rng.gen::<f64>() })
        .collect();
    let density: f64 = rng.gen_range(0.0..0.8);
    let g: Vec<f64> = match rng.gen_range(0..10) {
        0 => vec![0.0; 64],
        1..=2 => (0..64).map(|_| rng.gen::<f64>()).collect(),
        _ => (0..64).map(|_| (rng.gen::<f64>() < density) as u8 as f64).collect(),
    };
    (s, g)
}

pub fn curve(maps: &[(Vec<f64>, Vec<f64>)]) -> metrics::PrCurve {
    let refs: Vec<(&[f64], &[f64])> = maps.iter().map(|(s, g)| (s.as_slice(), g.as_slice())).collect();
    metrics::pr_sweep(&refs).unwrap()
}

/// Largest deviation from the oracles over `trials` random fixtures.
pub fn worst_deviation(trials: usize, seed: u64) -> f64 {
    let mut rng = super::rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let n = rng.gen_range(1..=4);
        let maps: Vec<(Vec<f64>, Vec<f64>)> = (0..n).map(|_| random_pair(&mut rng)).collect();
        for (s, g) in &maps {
            worst = worst.max((metrics::mae(s, g).unwrap() - mae(s, g)).abs());
        }
        let got = curve(&maps);
        let want = pr_sweep(&maps);
        for (p, &(wp, wr)) in got.points.iter().zip(&want) {
            worst = worst.max((p.precision - wp).abs()).max((p.recall - wr).abs());
            worst = worst.max((metrics::f_measure(p.precision, p.recall, BETA2) - f_measure(wp, wr, 0.3)).abs());
        }
        worst = worst.max((metrics::max_f(&got.points) - max_f(&want)).abs());
    }
    worst
}
