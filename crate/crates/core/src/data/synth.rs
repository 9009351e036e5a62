//! Deterministic synthetic datasets.
//!
//! Saliency images hold one or two saturated shapes on a muted, textured
//! background; the target is the exact shape mask. Edge images hold several
//! overlapping shapes; the target marks the one-pixel boundary of every
//! shape, including the parts hidden behind later shapes.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::manifest::{DatasetManifest, ManifestEntry, SampleKind, MANIFEST_FILE};
use super::netpbm::save_map;
use super::sample::Sample;
use crate::error::{Error, Result};
use crate::par;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
enum Figure {
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64, angle: f64 },
    Rect { cx: f64, cy: f64, hw: f64, hh: f64, angle: f64 },
}

impl Figure {
    fn random(rng: &mut ChaCha8Rng, size: f64, min_r: f64, max_r: f64) -> Self {
        let rx = rng.gen_range(min_r..max_r) * size;
        let ry = rng.gen_range(min_r..max_r) * size;
        let margin = 0.5 * rx.min(ry);
        let cx = rng.gen_range(margin..size - margin);
        let cy = rng.gen_range(margin..size - margin);
        let angle = rng.gen_range(0.0..std::f64::consts::PI);
        if rng.gen_bool(0.5) {
            Figure::Ellipse { cx, cy, rx, ry, angle }
        } else {
            Figure::Rect { cx, cy, hw: rx * 0.85, hh: ry * 0.85, angle }
        }
    }

    /// Pixel-centre containment test.
    fn contains(&self, x: usize, y: usize) -> bool {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let local = |cx: f64, cy: f64, angle: f64| {
            let (dx, dy) = (px - cx, py - cy);
            let (s, c) = angle.sin_cos();
            (c * dx + s * dy, -s * dx + c * dy)
        };
        match *self {
            Figure::Ellipse { cx, cy, rx, ry, angle } => {
                let (u, v) = local(cx, cy, angle);
                (u / rx).powi(2) + (v / ry).powi(2) <= 1.0
            }
            Figure::Rect { cx, cy, hw, hh, angle } => {
                let (u, v) = local(cx, cy, angle);
                u.abs() <= hw && v.abs() <= hh
            }
        }
    }

    fn mask(&self, size: usize) -> Vec<bool> {
        (0..size * size).map(|i| self.contains(i % size, i / size)).collect()
    }
}

fn rng_for(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Muted, cluttered background: a gradient, a sinusoidal texture,
/// low-saturation blobs and pixel noise. Returns planar RGB.
fn background(rng: &mut ChaCha8Rng, size: usize) -> Vec<f64> {
    let mut img = vec![0.0; 3 * size * size];
    let base: f64 = rng.gen_range(0.35..0.6);
    let tint: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-0.06..0.06));
    let (gx, gy): (f64, f64) = (rng.gen_range(-0.12..0.12), rng.gen_range(-0.12..0.12));
    let (fx, fy): (f64, f64) = (rng.gen_range(0.2..0.9), rng.gen_range(0.2..0.9));
    let phase: f64 = rng.gen_range(0.0..6.3);
    let s = size as f64;
    let blobs: Vec<(f64, f64, f64, [f64; 3])> = (0..rng.gen_range(3..=6))
        .map(|_| {
            let amp: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-0.2..0.2));
            (rng.gen_range(0.0..s), rng.gen_range(0.0..s), rng.gen_range(0.05..0.2) * s, amp)
        })
        .collect();
    for y in 0..size {
        for x in 0..size {
            let (u, v) = (x as f64 / s - 0.5, y as f64 / s - 0.5);
            let texture = 0.08 * (fx * x as f64 + phase).sin() * (fy * y as f64).cos();
            for (c, t) in tint.iter().enumerate() {
                let clutter: f64 = blobs
                    .iter()
                    .map(|(bx, by, r, amp)| {
                        let d2 = (x as f64 + 0.5 - bx).powi(2) + (y as f64 + 0.5 - by).powi(2);
                        amp[c] * (-d2 / (2.0 * r * r)).exp()
                    })
                    .sum();
                let noise: f64 = rng.gen_range(-0.05..0.05);
                img[c * size * size + y * size + x] =
                    (base + t + gx * u + gy * v + texture + clutter + noise).clamp(0.0, 1.0);
            }
        }
    }
    img
}

/// Saturated colour: at least one channel high and one low.
fn vivid_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let c: [f64; 3] = std::array::from_fn(|_| {
            if rng.gen_bool(0.5) {
                rng.gen_range(0.82..1.0)
            } else {
                rng.gen_range(0.0..0.18)
            }
        });
        let high = c.iter().filter(|&&v| v > 0.5).count();
        if (1..3).contains(&high) {
            return c;
        }
    }
}

fn paint(img: &mut [f64], mask: &[bool], color: [f64; 3], rng: &mut ChaCha8Rng) {
    let plane = mask.len();
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for (c, &v) in color.iter().enumerate() {
            let noise: f64 = rng.gen_range(-0.03..0.03);
            img[c * plane + i] = (v + noise).clamp(0.0, 1.0);
        }
    }
}

fn to_tensor(channels: usize, size: usize, data: Vec<f64>) -> Tensor<f32> {
    Tensor::new([1, channels, size, size], data.into_iter().map(|v| v as f32).collect()).expect("consistent size")
}

/// Image and binary mask of saliency example `index`.
pub fn saliency_pair(size: usize, seed: u64, index: usize) -> (Tensor<f32>, Tensor<f32>) {
    let mut rng = rng_for(seed, index);
    let mut img = background(&mut rng, size);
    let mut mask = vec![false; size * size];
    let count = rng.gen_range(1..=2);
    for _ in 0..count {
        let fig = Figure::random(&mut rng, size as f64, 0.12, 0.3);
        let m = fig.mask(size);
        let color = vivid_color(&mut rng);
        paint(&mut img, &m, color, &mut rng);
        mask.iter_mut().zip(&m).for_each(|(a, &b)| *a |= b);
    }
    let gt = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    (to_tensor(3, size, img), to_tensor(1, size, gt))
}

/// Pixels inside `mask` with a 4-neighbour outside it.
pub fn perimeter(mask: &[bool], size: usize) -> Vec<bool> {
    (0..size * size)
        .map(|i| {
            let (x, y) = (i % size, i / size);
            mask[i]
                && ((x > 0 && !mask[i - 1])
                    || (x + 1 < size && !mask[i + 1])
                    || (y > 0 && !mask[i - size])
                    || (y + 1 < size && !mask[i + size]))
        })
        .collect()
}

/// Image and boundary map of edge example `index`.
pub fn edge_pair(size: usize, seed: u64, index: usize) -> (Tensor<f32>, Tensor<f32>) {
    let mut rng = rng_for(seed ^ 0x5eed_ed9e, index);
    let mut img = background(&mut rng, size);
    let mut edges = vec![false; size * size];
    let count = rng.gen_range(2..=4);
    for _ in 0..count {
        let fig = Figure::random(&mut rng, size as f64, 0.1, 0.25);
        let m = fig.mask(size);
        let color: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
        paint(&mut img, &m, color, &mut rng);
        edges.iter_mut().zip(perimeter(&m, size)).for_each(|(a, b)| *a |= b);
    }
    let gt = edges.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    (to_tensor(3, size, img), to_tensor(1, size, gt))
}

fn pair_fn(kind: SampleKind) -> fn(usize, u64, usize) -> (Tensor<f32>, Tensor<f32>) {
    match kind {
        SampleKind::Saliency => saliency_pair,
        SampleKind::Edge => edge_pair,
    }
}

/// In-memory samples, padded to the network multiple.
pub fn synth_samples(kind: SampleKind, n: usize, size: usize, seed: u64) -> Vec<Sample> {
    let make = pair_fn(kind);
    par::map_range(n, |i| {
        let (img, gt) = make(size, seed, i);
        Sample::new(img, gt).expect("generator shapes agree").pad_to_multiple(super::PAD_MULTIPLE)
    })
}

/// Writes `n` examples and a manifest into `dir`.
pub fn synth_dataset(dir: &Path, kind: SampleKind, n: usize, size: usize, seed: u64) -> Result<DatasetManifest> {
    if size == 0 {
        return Err(Error::Config("synthetic image size must be >= 1".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let make = pair_fn(kind);
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let (img, gt) = make(size, seed, i);
        let entry = ManifestEntry { image: format!("img_{i:04}.ppm").into(), gt: format!("gt_{i:04}.pgm").into() };
        save_map(&img, &dir.join(&entry.image))?;
        save_map(&gt, &dir.join(&entry.gt))?;
        entries.push(entry);
    }
    let manifest = DatasetManifest { root: dir.to_owned(), kind, entries };
    manifest.write(&dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

pub fn synth_saliency_dataset(dir: &Path, n: usize, size: usize, seed: u64) -> Result<DatasetManifest> {
    synth_dataset(dir, SampleKind::Saliency, n, size, seed)
}

pub fn synth_edge_dataset(dir: &Path, n: usize, size: usize, seed: u64) -> Result<DatasetManifest> {
    synth_dataset(dir, SampleKind::Edge, n, size, seed)
}
