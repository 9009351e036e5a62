use super::{Shape, Tensor};
use crate::element::Element;
use crate::error::{Error, Result};
use crate::par;

const ELEMENTWISE_CHUNK: usize = 1 << 14;

fn map_vec<T: Element>(src: &[T], f: impl Fn(T) -> T + Send + Sync) -> Vec<T> {
    let mut out = src.to_vec();
    par::chunks_mut(&mut out, ELEMENTWISE_CHUNK, |_, c| c.iter_mut().for_each(|v| *v = f(*v)));
    out
}

fn zip_vec<T: Element>(a: &[T], b: &[T], f: impl Fn(T, T) -> T + Send + Sync) -> Vec<T> {
    let mut out = a.to_vec();
    par::chunks_mut(&mut out, ELEMENTWISE_CHUNK, |i, c| {
        let off = i * ELEMENTWISE_CHUNK;
        for (j, v) in c.iter_mut().enumerate() {
            *v = f(*v, b[off + j]);
        }
    });
    out
}

fn same_shape<T: Element>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub(crate) fn sigmoid_scalar<T: Element>(x: T) -> T {
    // Split by sign so exp never overflows.
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Element> Tensor<T> {
    pub fn relu(&self) -> Tensor<T> {
        let data = map_vec(self.data(), |v| if v > T::zero() || v.is_nan() { v } else { T::zero() });
        Tensor::from_op("relu", self.shape(), data, &[self], |g, inputs| {
            vec![Some(zip_vec(g, inputs[0].data(), |g, x| if x > T::zero() { g } else { T::zero() }))]
        })
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        let data = map_vec(self.data(), sigmoid_scalar);
        let saved = data.clone();
        Tensor::from_op("sigmoid", self.shape(), data, &[self], move |g, _| {
            vec![Some(zip_vec(g, &saved, |g, s| g * s * (T::one() - s)))]
        })
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("add", self, other)?;
        let data = zip_vec(self.data(), other.data(), |a, b| a + b);
        Ok(Tensor::from_op("add", self.shape(), data, &[self, other], |g, inputs| {
            inputs.iter().map(|t| t.requires_grad().then(|| g.to_vec())).collect()
        }))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("mul", self, other)?;
        let data = zip_vec(self.data(), other.data(), |a, b| a * b);
        Ok(Tensor::from_op("mul", self.shape(), data, &[self, other], |g, inputs| {
            vec![
                inputs[0].requires_grad().then(|| zip_vec(g, inputs[1].data(), |g, b| g * b)),
                inputs[1].requires_grad().then(|| zip_vec(g, inputs[0].data(), |g, a| g * a)),
            ]
        }))
    }

    /// Multiplies every element by the single value held in `s`.
    pub fn mul_broadcast_scalar(&self, s: &Tensor<T>) -> Result<Tensor<T>> {
        if s.numel() != 1 {
            return Err(Error::shape("mul_broadcast_scalar", format!("{:?} is not a scalar", s.shape())));
        }
        let k = s.item();
        let data = map_vec(self.data(), |v| v * k);
        Ok(Tensor::from_op("mul_scalar", self.shape(), data, &[self, s], |g, inputs| {
            let k = inputs[1].item();
            vec![
                inputs[0].requires_grad().then(|| map_vec(g, |g| g * k)),
                inputs[1]
                    .requires_grad()
                    .then(|| vec![g.iter().zip(inputs[0].data()).map(|(&g, &x)| g * x).sum()]),
            ]
        }))
    }

    pub fn scale(&self, k: f64) -> Tensor<T> {
        let k = T::from_f64(k);
        let data = map_vec(self.data(), |v| v * k);
        Tensor::from_op("scale", self.shape(), data, &[self], move |g, _| vec![Some(map_vec(g, |g| g * k))])
    }

    /// Sum of all elements as a `1×1×1×1` tensor.
    pub fn sum(&self) -> Tensor<T> {
        let total: T = self.data().iter().copied().sum();
        let n = self.numel();
        Tensor::from_op("sum", [1, 1, 1, 1], vec![total], &[self], move |g, _| vec![Some(vec![g[0]; n])])
    }

    pub fn mean(&self) -> Tensor<T> {
        self.sum().scale(1.0 / self.numel() as f64)
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let first = inputs.first().ok_or_else(|| Error::arg("concat_channels", "no inputs"))?;
        let [n, _, h, w] = first.shape();
        for t in inputs {
            let [tn, _, th, tw] = t.shape();
            if (tn, th, tw) != (n, h, w) {
                return Err(Error::shape(
                    "concat_channels",
                    format!("{:?} vs {:?}: batch and spatial dims must agree", first.shape(), t.shape()),
                ));
            }
        }
        let chans: Vec<usize> = inputs.iter().map(|t| t.channels()).collect();
        let total_c: usize = chans.iter().sum();
        let plane = h * w;
        let mut data = Vec::with_capacity(n * total_c * plane);
        for b in 0..n {
            for (t, &c) in inputs.iter().zip(&chans) {
                data.extend_from_slice(&t.data()[b * c * plane..(b + 1) * c * plane]);
            }
        }
        let shape: Shape = [n, total_c, h, w];
        Ok(Tensor::from_op("concat_channels", shape, data, inputs, move |g, ins| {
            let mut offset = 0;
            ins.iter()
                .zip(&chans)
                .map(|(t, &c)| {
                    let start = offset;
                    offset += c;
                    t.requires_grad().then(|| {
                        let mut out = Vec::with_capacity(n * c * plane);
                        for b in 0..n {
                            let base = (b * total_c + start) * plane;
                            out.extend_from_slice(&g[base..base + c * plane]);
                        }
                        out
                    })
                })
                .collect()
        }))
    }

    /// Mirrors along the width axis.
    pub fn hflip(&self) -> Tensor<T> {
        fn flip<T: Copy>(src: &[T], w: usize) -> Vec<T> {
            src.chunks(w).flat_map(|row| row.iter().rev().copied()).collect()
        }
        let w = self.width();
        Tensor::from_op("hflip", self.shape(), flip(self.data(), w), &[self], move |g, _| {
            vec![Some(flip(g, w))]
        })
    }

    /// Top-left `h×w` window, as a constant.
    pub fn crop(&self, h: usize, w: usize) -> Result<Tensor<T>> {
        let [n, c, sh, sw] = self.shape();
        if h == 0 || w == 0 || h > sh || w > sw {
            return Err(Error::shape("crop", format!("cannot crop {sh}x{sw} to {h}x{w}")));
        }
        let mut data = Vec::with_capacity(n * c * h * w);
        for plane in self.data().chunks(sh * sw) {
            for row in plane.chunks(sw).take(h) {
                data.extend_from_slice(&row[..w]);
            }
        }
        Tensor::new([n, c, h, w], data)
    }

    /// Stacks same-shaped single-sample constants along the batch axis.
    pub fn stack_batch(items: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let first = items.first().ok_or_else(|| Error::arg("stack_batch", "no inputs"))?;
        let [_, c, h, w] = first.shape();
        let mut data = Vec::new();
        let mut n = 0;
        for t in items {
            let [tn, tc, th, tw] = t.shape();
            if (tc, th, tw) != (c, h, w) {
                return Err(Error::shape("stack_batch", format!("{:?} vs {:?}", first.shape(), t.shape())));
            }
            n += tn;
            data.extend_from_slice(t.data());
        }
        Tensor::new([n, c, h, w], data)
    }
}
