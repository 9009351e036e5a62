//! 2-D convolution (cross-correlation) lowered to GEMM through im2col.

use super::Tensor;
use crate::element::{gemm, Element, MatRef};
use crate::error::{Error, Result};
use crate::par;

#[derive(Clone, Copy, Debug)]
struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    fn col_rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.oh * self.ow
    }
}

/// Unfolds one `C×H×W` image into a `(C·kh·kw) × (oh·ow)` matrix.
fn im2col<T: Element>(img: &[T], g: &Geometry) -> Vec<T> {
    let n_cols = g.col_cols();
    let mut cols = vec![T::zero(); g.col_rows() * n_cols];
    par::chunks_mut(&mut cols, n_cols, |row, out| {
        let c = row / (g.kh * g.kw);
        let ky = (row / g.kw) % g.kh;
        let kx = row % g.kw;
        let plane = &img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for oy in 0..g.oh {
            let iy = (oy * g.stride + ky) as isize - g.pad as isize;
            if iy < 0 || iy >= g.h as isize {
                continue;
            }
            let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
            let dst = &mut out[oy * g.ow..(oy + 1) * g.ow];
            for (ox, d) in dst.iter_mut().enumerate() {
                let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                if ix >= 0 && ix < g.w as isize {
                    *d = src[ix as usize];
                }
            }
        }
    });
    cols
}

/// Folds a column matrix back into an image, summing overlapping taps.
fn col2im<T: Element>(cols: &[T], g: &Geometry, img: &mut [T]) {
    let n_cols = g.col_cols();
    let taps = g.kh * g.kw;
    par::chunks_mut(img, g.h * g.w, |c, plane| {
        for t in 0..taps {
            let (ky, kx) = (t / g.kw, t % g.kw);
            let src = &cols[(c * taps + t) * n_cols..(c * taps + t + 1) * n_cols];
            for oy in 0..g.oh {
                let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                if iy < 0 || iy >= g.h as isize {
                    continue;
                }
                let row = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                for ox in 0..g.ow {
                    let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                    if ix >= 0 && ix < g.w as isize {
                        row[ix as usize] = row[ix as usize] + src[oy * g.ow + ox];
                    }
                }
            }
        }
    });
}

impl<T: Element> Tensor<T> {
    /// Cross-correlates `self` (`N×C×H×W`) with `weight` (`O×C×kh×kw`).
    ///
    /// Output spatial size is `floor((H + 2·padding − kh) / stride) + 1`.
    pub fn conv2d(
        &self,
        weight: &Tensor<T>,
        bias: Option<&Tensor<T>>,
        stride: usize,
        padding: usize,
    ) -> Result<Tensor<T>> {
        let [n, c, h, w] = self.shape();
        let [o, wc, kh, kw] = weight.shape();
        if wc != c {
            return Err(Error::shape(
                "conv2d",
                format!("input has {c} channels but weight expects {wc} (weight shape {:?})", weight.shape()),
            ));
        }
        if stride == 0 {
            return Err(Error::arg("conv2d", "stride must be >= 1"));
        }
        if h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(Error::shape(
                "conv2d",
                format!("kernel {kh}x{kw} larger than padded input {}x{}", h + 2 * padding, w + 2 * padding),
            ));
        }
        if let Some(b) = bias {
            if b.numel() != o {
                return Err(Error::shape(
                    "conv2d",
                    format!("bias has {} values for {o} output channels", b.numel()),
                ));
            }
        }
        let g = Geometry {
            c,
            h,
            w,
            kh,
            kw,
            stride,
            pad: padding,
            oh: (h + 2 * padding - kh) / stride + 1,
            ow: (w + 2 * padding - kw) / stride + 1,
        };
        let plane_in = c * h * w;
        let plane_out = o * g.col_cols();
        let keep_cols = self.requires_grad() || weight.requires_grad() || bias.is_some_and(|b| b.requires_grad());

        let mut out = vec![T::zero(); n * plane_out];
        let mut saved_cols: Vec<Vec<T>> = Vec::new();
        let wmat = MatRef::new(weight.data(), o, g.col_rows());
        for b in 0..n {
            let img = &self.data()[b * plane_in..(b + 1) * plane_in];
            let dst = &mut out[b * plane_out..(b + 1) * plane_out];
            if g.is_pointwise() {
                gemm(wmat, MatRef::new(img, c, g.col_cols()), dst, false);
            } else {
                let cols = im2col(img, &g);
                gemm(wmat, MatRef::new(&cols, g.col_rows(), g.col_cols()), dst, false);
                if keep_cols {
                    saved_cols.push(cols);
                }
            }
        }
        if let Some(bias) = bias {
            let bv = bias.data();
            let hw = g.col_cols();
            par::chunks_mut(&mut out, hw, |i, plane| {
                let v = bv[i % o];
                plane.iter_mut().for_each(|x| *x = *x + v);
            });
        }

        let mut inputs = vec![self, weight];
        if let Some(b) = bias {
            inputs.push(b);
        }
        Ok(Tensor::from_op("conv2d", [n, o, g.oh, g.ow], out, &inputs, move |grad, ins| {
            let (x, wt) = (&ins[0], &ins[1]);
            let hw = g.col_cols();
            let wmat = MatRef::new(wt.data(), o, g.col_rows());

            let dbias = ins.get(2).filter(|b| b.requires_grad()).map(|_| {
                let mut db = vec![T::zero(); o];
                for (i, plane) in grad.chunks(hw).enumerate() {
                    db[i % o] = db[i % o] + plane.iter().copied().sum();
                }
                db
            });

            let dweight = wt.requires_grad().then(|| {
                let mut dw = vec![T::zero(); wt.numel()];
                for b in 0..n {
                    let gb = MatRef::new(&grad[b * plane_out..(b + 1) * plane_out], o, hw);
                    let cols = if g.is_pointwise() {
                        MatRef::new(&x.data()[b * plane_in..(b + 1) * plane_in], c, hw)
                    } else {
                        MatRef::new(&saved_cols[b], g.col_rows(), hw)
                    };
                    gemm(gb, cols.t(), &mut dw, b > 0);
                }
                dw
            });

            let dinput = x.requires_grad().then(|| {
                let mut dx = vec![T::zero(); n * plane_in];
                for b in 0..n {
                    let gb = MatRef::new(&grad[b * plane_out..(b + 1) * plane_out], o, hw);
                    let dst = &mut dx[b * plane_in..(b + 1) * plane_in];
                    if g.is_pointwise() {
                        gemm(wmat.t(), gb, dst, false);
                    } else {
                        let mut dcols = vec![T::zero(); g.col_rows() * hw];
                        gemm(wmat.t(), gb, &mut dcols, false);
                        col2im(&dcols, &g, dst);
                    }
                }
                dx
            });

            let mut grads = vec![dinput, dweight];
            if ins.len() > 2 {
                grads.push(dbias);
            }
            grads
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct 7-loop cross-correlation.
    fn direct(x: &Tensor<f64>, wt: &Tensor<f64>, bias: &[f64], stride: usize, pad: usize) -> Vec<f64> {
        let [n, c, h, w] = x.shape();
        let [o, _, kh, kw] = wt.shape();
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        let mut out = vec![0.0; n * o * oh * ow];
        for b in 0..n {
            for oc in 0..o {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut s = bias[oc];
                        for ic in 0..c {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                        s += x.at(b, ic, iy as usize, ix as usize) * wt.at(oc, ic, ky, kx);
                                    }
                                }
                            }
                        }
                        out[((b * o + oc) * oh + oy) * ow + ox] = s;
                    }
                }
            }
        }
        out
    }

    fn pseudo(shape: [usize; 4], seed: u64) -> Tensor<f64> {
        let mut s = seed;
        Tensor::from_fn(shape, |_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn ones_kernel_sums_window() {
        let x = Tensor::<f64>::full([1, 1, 3, 3], 1.0);
        let k = Tensor::<f64>::full([1, 1, 3, 3], 1.0);
        let y = x.conv2d(&k, None, 1, 0).unwrap();
        assert_eq!(y.shape(), [1, 1, 1, 1]);
        assert_eq!(y.item(), 9.0);
    }

    #[test]
    fn identity_kernel_is_identity() {
        let x = pseudo([1, 1, 4, 4], 3);
        let k = Tensor::<f64>::full([1, 1, 1, 1], 1.0);
        assert_eq!(x.conv2d(&k, None, 1, 0).unwrap().data(), x.data());
    }

    #[test]
    fn matches_direct_loops_for_strides_and_padding() {
        for &(stride, pad, k) in &[(1, 1, 3), (2, 1, 3), (1, 0, 3), (2, 0, 1), (3, 2, 3), (1, 0, 1)] {
            let x = pseudo([2, 3, 7, 6], 11);
            let wt = pseudo([4, 3, k, k], 5);
            let bias = vec![0.1, -0.2, 0.3, 0.0];
            let b = Tensor::new([1, 4, 1, 1], bias.clone()).unwrap();
            let got = x.conv2d(&wt, Some(&b), stride, pad).unwrap();
            let want = direct(&x, &wt, &bias, stride, pad);
            for (g, w) in got.data().iter().zip(&want) {
                assert!((g - w).abs() < 1e-12, "stride {stride} pad {pad}: {g} vs {w}");
            }
        }
    }

    #[test]
    fn shape_errors_name_dimensions() {
        let x = Tensor::<f64>::zeros([1, 2, 4, 4]);
        let wt = Tensor::<f64>::zeros([1, 3, 3, 3]);
        let err = x.conv2d(&wt, None, 1, 1).unwrap_err().to_string();
        assert!(err.contains("2 channels") && err.contains("expects 3"), "{err}");
        let wt = Tensor::<f64>::zeros([1, 2, 3, 3]);
        assert!(x.conv2d(&wt, None, 0, 1).is_err());
        let bad_bias = Tensor::<f64>::zeros([1, 2, 1, 1]);
        assert!(x.conv2d(&wt, Some(&bad_bias), 1, 1).is_err());
    }
}
