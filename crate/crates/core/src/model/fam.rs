//! Feature aggregation module.

use super::layers::Conv;
use crate::element::Element;
use crate::error::Result;
use crate::param::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Fam {
    rates: Vec<usize>,
    branch: Vec<Conv>,
    out: Conv,
}

impl Fam {
    pub fn new<T: Element>(store: &mut ParamStore<T>, name: &str, seed: u64, channels: usize, rates: &[usize]) -> Result<Self> {
        let branch = rates
            .iter()
            .map(|r| Conv::new(store, &format!("{name}.pool{r}"), seed, channels, channels, 3, true))
            .collect::<Result<_>>()?;
        let out = Conv::new(store, &format!("{name}.out"), seed, channels, channels, 3, true)?;
        Ok(Self { rates: rates.to_vec(), branch, out })
    }

    /// Identity plus one pooled branch per rate.
    pub fn branch_count(&self) -> usize {
        self.rates.len() + 1
    }

    /// Pooled view of `x` at `rate`. When the map is too coarse to divide
    /// evenly, the bins fall back to adaptive pooling over
    /// `ceil(h/rate) × ceil(w/rate)` cells.
    fn pool<T: Element>(x: &Tensor<T>, rate: usize) -> Result<Tensor<T>> {
        let (h, w) = (x.height(), x.width());
        if h % rate == 0 && w % rate == 0 {
            x.avg_pool2d(rate)
        } else {
            x.adaptive_avg_pool2d(h.div_ceil(rate), w.div_ceil(rate))
        }
    }

    pub fn forward<T: Element>(&self, store: &ParamStore<T>, fused: &Tensor<T>) -> Result<Tensor<T>> {
        let (h, w) = (fused.height(), fused.width());
        let mut acc = fused.clone();
        for (&rate, conv) in self.rates.iter().zip(&self.branch) {
            let pooled = conv.forward(store, &Self::pool(fused, rate)?)?;
            let up = if pooled.height() * rate == h && pooled.width() * rate == w {
                pooled.upsample_bilinear(rate)?
            } else {
                pooled.resize_bilinear(h, w)?
            };
            acc = acc.add(&up)?;
        }
        self.out.forward(store, &acc)
    }
}
