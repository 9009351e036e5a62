//! Bilinear resampling with the half-pixel (align-corners-false) convention.

use super::Tensor;
use crate::element::Element;
use crate::error::{Error, Result};
use crate::par;

/// Integer factors accepted by [`Tensor::upsample_bilinear`].
pub const UPSAMPLE_FACTORS: [usize; 5] = [1, 2, 4, 8, 16];

/// Per-output-index taps `(lo, hi, weight_lo, weight_hi)` along one axis.
fn axis_taps(in_len: usize, out_len: usize) -> Vec<(usize, usize, f64, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|d| {
            let src = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(in_len - 1);
            let hi = (lo + 1).min(in_len - 1);
            let frac = if lo == in_len - 1 { 0.0 } else { src - lo as f64 };
            (lo, hi, 1.0 - frac, frac)
        })
        .collect()
}

impl<T: Element> Tensor<T> {
    /// Enlarges by an integer `factor` in both spatial axes.
    pub fn upsample_bilinear(&self, factor: usize) -> Result<Tensor<T>> {
        if !UPSAMPLE_FACTORS.contains(&factor) {
            return Err(Error::arg(
                "upsample_bilinear",
                format!("factor {factor} not in {UPSAMPLE_FACTORS:?}"),
            ));
        }
        if factor == 1 {
            return Ok(self.scale(1.0));
        }
        self.resize_bilinear(self.height() * factor, self.width() * factor)
    }

    /// Resamples to an arbitrary `out_h×out_w`.
    pub fn resize_bilinear(&self, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
        if out_h == 0 || out_w == 0 {
            return Err(Error::arg("resize_bilinear", format!("output size {out_h}x{out_w} must be >= 1")));
        }
        let [n, c, h, w] = self.shape();
        if (out_h, out_w) == (h, w) {
            return Ok(self.scale(1.0));
        }
        let conv = |v: Vec<(usize, usize, f64, f64)>| -> Vec<(usize, usize, T, T)> {
            v.into_iter().map(|(a, b, wa, wb)| (a, b, T::from_f64(wa), T::from_f64(wb))).collect()
        };
        let ys = conv(axis_taps(h, out_h));
        let xs = conv(axis_taps(w, out_w));
        let src = self.data();
        let mut out = vec![T::zero(); n * c * out_h * out_w];
        {
            let (ys, xs) = (&ys, &xs);
            par::chunks_mut(&mut out, out_h * out_w, |p, dst| {
                let plane = &src[p * h * w..(p + 1) * h * w];
                for (oy, &(y0, y1, wy0, wy1)) in ys.iter().enumerate() {
                    let (r0, r1) = (&plane[y0 * w..(y0 + 1) * w], &plane[y1 * w..(y1 + 1) * w]);
                    for (ox, &(x0, x1, wx0, wx1)) in xs.iter().enumerate() {
                        dst[oy * out_w + ox] =
                            wy0 * (wx0 * r0[x0] + wx1 * r0[x1]) + wy1 * (wx0 * r1[x0] + wx1 * r1[x1]);
                    }
                }
            });
        }
        Ok(Tensor::from_op("resize_bilinear", [n, c, out_h, out_w], out, &[self], move |g, _| {
            let mut dx = vec![T::zero(); n * c * h * w];
            par::chunks_mut(&mut dx, h * w, |p, plane| {
                let gp = &g[p * out_h * out_w..(p + 1) * out_h * out_w];
                for (oy, &(y0, y1, wy0, wy1)) in ys.iter().enumerate() {
                    for (ox, &(x0, x1, wx0, wx1)) in xs.iter().enumerate() {
                        let gv = gp[oy * out_w + ox];
                        plane[y0 * w + x0] = plane[y0 * w + x0] + gv * wy0 * wx0;
                        plane[y0 * w + x1] = plane[y0 * w + x1] + gv * wy0 * wx1;
                        plane[y1 * w + x0] = plane[y1 * w + x0] + gv * wy1 * wx0;
                        plane[y1 * w + x1] = plane[y1 * w + x1] + gv * wy1 * wx1;
                    }
                }
            });
            vec![Some(dx)]
        }))
    }
}
