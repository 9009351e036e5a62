//! F-measure, MAE and precision/recall sweeps over 256 thresholds.

use std::io::Write;

use crate::error::{Error, Result};
use crate::par;

/// Precision weight in the F-measure.
pub const BETA2: f64 = 0.3;
pub const THRESHOLDS: usize = 256;

/// Threshold `k` of the sweep, `k/255`.
pub fn threshold(k: usize) -> f64 {
    k as f64 / 255.0
}

/// Weighted harmonic mean; 0 when both terms vanish.
pub fn f_measure(precision: f64, recall: f64, beta2: f64) -> f64 {
    let den = beta2 * precision + recall;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + beta2) * precision * recall / den
    }
}

fn check_pair(s: &[f64], g: &[f64], op: &'static str) -> Result<()> {
    if s.len() != g.len() {
        return Err(Error::shape(op, format!("map has {} pixels, ground truth has {}", s.len(), g.len())));
    }
    if s.is_empty() {
        return Err(Error::arg(op, "empty map"));
    }
    if let Some(v) = s.iter().chain(g).find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::arg(op, format!("value {v} outside [0, 1]")));
    }
    Ok(())
}

/// Mean absolute difference.
pub fn mae(s: &[f64], g: &[f64]) -> Result<f64> {
    check_pair(s, g, "mae")?;
    Ok(s.iter().zip(g).map(|(a, b)| (a - b).abs()).sum::<f64>() / s.len() as f64)
}

/// Index of the highest threshold not exceeding `s`.
fn bucket(s: f64) -> usize {
    let mut k = ((s * 255.0).floor() as usize).min(THRESHOLDS - 1);
    while k + 1 < THRESHOLDS && threshold(k + 1) <= s {
        k += 1;
    }
    while k > 0 && threshold(k) > s {
        k -= 1;
    }
    k
}

/// Per-threshold confusion counts of one image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageCounts {
    /// Pixels with ground truth ≥ 0.5.
    pub positives: u64,
    /// Predicted positives (`s ≥ t`) per threshold.
    pub predicted: Vec<u64>,
    /// True positives per threshold.
    pub true_positive: Vec<u64>,
}

impl ImageCounts {
    pub fn new(s: &[f64], g: &[f64]) -> Result<Self> {
        check_pair(s, g, "pr_sweep")?;
        let mut hist_all = vec![0u64; THRESHOLDS];
        let mut hist_pos = vec![0u64; THRESHOLDS];
        let mut positives = 0;
        for (&sv, &gv) in s.iter().zip(g) {
            let b = bucket(sv);
            hist_all[b] += 1;
            if gv >= 0.5 {
                hist_pos[b] += 1;
                positives += 1;
            }
        }
        let suffix = |h: Vec<u64>| {
            let mut acc = 0;
            let mut out = vec![0; THRESHOLDS];
            for k in (0..THRESHOLDS).rev() {
                acc += h[k];
                out[k] = acc;
            }
            out
        };
        Ok(Self { positives, predicted: suffix(hist_all), true_positive: suffix(hist_pos) })
    }

    /// Precision at threshold `k`; 1 for an empty prediction.
    pub fn precision(&self, k: usize) -> f64 {
        match self.predicted[k] {
            0 => 1.0,
            p => self.true_positive[k] as f64 / p as f64,
        }
    }

    /// Recall at threshold `k`; `None` when the ground truth is empty.
    pub fn recall(&self, k: usize) -> Option<f64> {
        (self.positives > 0).then(|| self.true_positive[k] as f64 / self.positives as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    /// Images whose ground truth has no positive pixel; they are left out of
    /// recall averaging.
    pub empty_gt: Vec<usize>,
}

/// Image-averaged precision and recall at every threshold.
pub fn pr_sweep(pairs: &[(&[f64], &[f64])]) -> Result<PrCurve> {
    if pairs.is_empty() {
        return Err(Error::arg("pr_sweep", "no images"));
    }
    let counts = par::map_range(pairs.len(), |i| ImageCounts::new(pairs[i].0, pairs[i].1));
    let counts = counts.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(curve_from_counts(&counts))
}

pub fn curve_from_counts(counts: &[ImageCounts]) -> PrCurve {
    let empty_gt: Vec<usize> = counts.iter().enumerate().filter(|(_, c)| c.positives == 0).map(|(i, _)| i).collect();
    let with_gt = (counts.len() - empty_gt.len()) as f64;
    let points = (0..THRESHOLDS)
        .map(|k| {
            let precision = counts.iter().map(|c| c.precision(k)).sum::<f64>() / counts.len() as f64;
            let recall_sum: f64 = counts.iter().filter_map(|c| c.recall(k)).sum();
            let recall = if with_gt > 0.0 { recall_sum / with_gt } else { 0.0 };
            PrPoint { threshold: threshold(k), precision, recall }
        })
        .collect();
    PrCurve { points, empty_gt }
}

/// Best F-measure along a curve.
pub fn max_f(points: &[PrPoint]) -> f64 {
    points.iter().map(|p| f_measure(p.precision, p.recall, BETA2)).fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub max_f: f64,
    /// Mean of per-image MAE.
    pub mae: f64,
    pub curve: PrCurve,
}

/// MaxF, MAE and the PR curve over a set of maps.
pub fn evaluate(pairs: &[(&[f64], &[f64])]) -> Result<MetricsRecord> {
    let curve = pr_sweep(pairs)?;
    let maes = par::map_range(pairs.len(), |i| mae(pairs[i].0, pairs[i].1));
    let total: f64 = maes.into_iter().collect::<Result<Vec<_>>>()?.iter().sum();
    Ok(MetricsRecord { max_f: max_f(&curve.points), mae: total / pairs.len() as f64, curve })
}

pub const CSV_HEADER: &str = "row,threshold,precision,recall,max_f,mae";

impl MetricsRecord {
    /// One summary row then one row per threshold.
    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        writeln!(out, "summary,,,,{},{}", self.max_f, self.mae)?;
        for p in &self.curve.points {
            writeln!(out, "curve,{},{},{},,", p.threshold, p.precision, p.recall)?;
        }
        Ok(())
    }
}
