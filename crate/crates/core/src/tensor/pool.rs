//! Average, adaptive-average, global-average and max pooling.

use super::Tensor;
use crate::element::Element;
use crate::error::{Error, Result};
use crate::par;

/// Half-open input range `[floor(i·len/out), ceil((i+1)·len/out))` covered by
/// output bin `i`.
pub fn adaptive_bin(i: usize, len: usize, out: usize) -> (usize, usize) {
    let start = (i * len) / out;
    let end = ((i + 1) * len).div_ceil(out);
    (start, end)
}

fn check_divisible(op: &'static str, h: usize, w: usize, rate: usize) -> Result<()> {
    if rate == 0 {
        return Err(Error::arg(op, "rate must be >= 1"));
    }
    if h % rate != 0 || w % rate != 0 {
        return Err(Error::shape(
            op,
            format!("spatial size {h}x{w} is not divisible by rate {rate}"),
        ));
    }
    Ok(())
}

impl<T: Element> Tensor<T> {
    /// Non-overlapping `rate×rate` mean pooling.
    pub fn avg_pool2d(&self, rate: usize) -> Result<Tensor<T>> {
        let [n, c, h, w] = self.shape();
        check_divisible("avg_pool2d", h, w, rate)?;
        if rate == 1 {
            return Ok(self.scale(1.0));
        }
        let (oh, ow) = (h / rate, w / rate);
        let inv = T::from_f64(1.0 / (rate * rate) as f64);
        let src = self.data();
        let mut out = vec![T::zero(); n * c * oh * ow];
        par::chunks_mut(&mut out, oh * ow, |p, dst| {
            let plane = &src[p * h * w..(p + 1) * h * w];
            for y in 0..h {
                for x in 0..w {
                    let d = &mut dst[(y / rate) * ow + x / rate];
                    *d = *d + plane[y * w + x];
                }
            }
            dst.iter_mut().for_each(|v| *v = *v * inv);
        });
        Ok(Tensor::from_op("avg_pool2d", [n, c, oh, ow], out, &[self], move |g, _| {
            let mut dx = vec![T::zero(); n * c * h * w];
            par::chunks_mut(&mut dx, h * w, |p, plane| {
                let gp = &g[p * oh * ow..(p + 1) * oh * ow];
                for y in 0..h {
                    for x in 0..w {
                        plane[y * w + x] = gp[(y / rate) * ow + x / rate] * inv;
                    }
                }
            });
            vec![Some(dx)]
        }))
    }

    /// Mean over variable-size bins so the output is exactly `out_h×out_w`.
    ///
    /// Output sizes larger than the input are allowed; bins then overlap and
    /// repeat input cells.
    pub fn adaptive_avg_pool2d(&self, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
        if out_h == 0 || out_w == 0 {
            return Err(Error::arg("adaptive_avg_pool2d", format!("output size {out_h}x{out_w} must be >= 1")));
        }
        let [n, c, h, w] = self.shape();
        let rows: Vec<(usize, usize)> = (0..out_h).map(|i| adaptive_bin(i, h, out_h)).collect();
        let cols: Vec<(usize, usize)> = (0..out_w).map(|j| adaptive_bin(j, w, out_w)).collect();
        let src = self.data();
        let mut out = vec![T::zero(); n * c * out_h * out_w];
        {
            let (rows, cols) = (&rows, &cols);
            par::chunks_mut(&mut out, out_h * out_w, |p, dst| {
                let plane = &src[p * h * w..(p + 1) * h * w];
                for (i, &(r0, r1)) in rows.iter().enumerate() {
                    for (j, &(c0, c1)) in cols.iter().enumerate() {
                        let mut s = T::zero();
                        for y in r0..r1 {
                            for x in c0..c1 {
                                s = s + plane[y * w + x];
                            }
                        }
                        dst[i * out_w + j] = s / T::from_f64(((r1 - r0) * (c1 - c0)) as f64);
                    }
                }
            });
        }
        Ok(Tensor::from_op("adaptive_avg_pool2d", [n, c, out_h, out_w], out, &[self], move |g, _| {
            let mut dx = vec![T::zero(); n * c * h * w];
            par::chunks_mut(&mut dx, h * w, |p, plane| {
                let gp = &g[p * out_h * out_w..(p + 1) * out_h * out_w];
                for (i, &(r0, r1)) in rows.iter().enumerate() {
                    for (j, &(c0, c1)) in cols.iter().enumerate() {
                        let share = gp[i * out_w + j] / T::from_f64(((r1 - r0) * (c1 - c0)) as f64);
                        for y in r0..r1 {
                            for x in c0..c1 {
                                plane[y * w + x] = plane[y * w + x] + share;
                            }
                        }
                    }
                }
            });
            vec![Some(dx)]
        }))
    }

    /// Per-channel spatial mean, `N×C×1×1`.
    pub fn global_avg_pool(&self) -> Tensor<T> {
        let [n, c, h, w] = self.shape();
        let hw = h * w;
        let inv = T::from_f64(1.0 / hw as f64);
        let out: Vec<T> = self.data().chunks(hw).map(|p| p.iter().copied().sum::<T>() * inv).collect();
        Tensor::from_op("global_avg_pool", [n, c, 1, 1], out, &[self], move |g, _| {
            vec![Some(g.iter().flat_map(|&v| std::iter::repeat(v * inv).take(hw)).collect())]
        })
    }

    /// Non-overlapping `rate×rate` max pooling. Gradient goes to the first
    /// maximum in row-major order within each window.
    pub fn max_pool2d(&self, rate: usize) -> Result<Tensor<T>> {
        let [n, c, h, w] = self.shape();
        check_divisible("max_pool2d", h, w, rate)?;
        let (oh, ow) = (h / rate, w / rate);
        let src = self.data();
        let cells = n * c * oh * ow;
        let mut argmax = vec![0usize; cells];
        par::chunks_mut(&mut argmax, oh * ow, |p, dst| {
            let base = p * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * rate * w + ox * rate;
                    for dy in 0..rate {
                        for dx in 0..rate {
                            let idx = base + (oy * rate + dy) * w + ox * rate + dx;
                            // NaN wins so it propagates instead of vanishing.
                            if src[idx] > src[best] || (src[idx].is_nan() && !src[best].is_nan()) {
                                best = idx;
                            }
                        }
                    }
                    dst[oy * ow + ox] = best;
                }
            }
        });
        let out: Vec<T> = argmax.iter().map(|&i| src[i]).collect();
        let numel = self.numel();
        Ok(Tensor::from_op("max_pool2d", [n, c, oh, ow], out, &[self], move |g, _| {
            let mut dx = vec![T::zero(); numel];
            for (&i, &gv) in argmax.iter().zip(g) {
                dx[i] = dx[i] + gv;
            }
            vec![Some(dx)]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn avg_pool_mean_and_identity() {
        let x = Tensor::<f64>::new([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(x.avg_pool2d(2).unwrap().item(), 2.5);
        assert_eq!(x.avg_pool2d(1).unwrap().data(), x.data());
        let err = Tensor::<f64>::zeros([1, 1, 6, 6]).avg_pool2d(4).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn adaptive_quadrants_and_identity() {
        let x = Tensor::<f64>::from_fn([1, 1, 4, 4], |i| i as f64);
        let y = x.adaptive_avg_pool2d(2, 2).unwrap();
        assert_eq!(y.data(), &[2.5, 4.5, 10.5, 12.5]);
        assert_eq!(x.adaptive_avg_pool2d(4, 4).unwrap().data(), x.data());
        assert!(x.adaptive_avg_pool2d(0, 2).is_err());
    }

    #[test]
    fn adaptive_five_to_three_rows() {
        // Rows are constant 0..4; bins are [0,2), [1,4), [3,5).
        let x = Tensor::<f64>::from_fn([1, 1, 5, 5], |i| (i / 5) as f64);
        let y = x.adaptive_avg_pool2d(3, 3).unwrap();
        for j in 0..3 {
            assert_eq!(y.at(0, 0, 0, j), 0.5);
            assert_eq!(y.at(0, 0, 1, j), 2.0);
            assert_eq!(y.at(0, 0, 2, j), 3.5);
        }
    }

    #[test]
    fn adaptive_upscaling_repeats_cells() {
        let x = Tensor::<f64>::new([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = x.adaptive_avg_pool2d(3, 3).unwrap();
        // bins over 2 with 3 outputs: [0,1), [0,2), [1,2)
        assert_eq!(y.data(), &[1.0, 1.5, 2.0, 2.0, 2.5, 3.0, 3.0, 3.5, 4.0]);
    }

    #[test]
    fn global_pool_per_channel() {
        let x = Tensor::<f64>::new([1, 2, 2, 2], vec![1.0, 1.0, 1.0, 1.0, 0.0, 2.0, 0.0, 2.0]).unwrap();
        assert_eq!(x.global_avg_pool().data(), &[1.0, 1.0]);
    }

    #[test]
    fn max_pool_value_and_tie_rule() {
        let x = Tensor::<f64>::new([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(x.max_pool2d(2).unwrap().item(), 4.0);

        let p = Tensor::<f64>::parameter([1, 1, 2, 2], vec![7.0; 4]).unwrap();
        p.max_pool2d(2).unwrap().sum().backward().unwrap();
        assert_eq!(p.grad().unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        assert!(Tensor::<f64>::zeros([1, 1, 3, 4]).max_pool2d(2).is_err());
    }
}
