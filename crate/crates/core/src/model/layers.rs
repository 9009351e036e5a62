use crate::element::Element;
use crate::error::Result;
use crate::param::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Square convolution with bias, "same" padding and an optional relu.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub relu: bool,
}

impl Conv {
    pub fn new<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        seed: u64,
        in_c: usize,
        out_c: usize,
        kernel: usize,
        relu: bool,
    ) -> Result<Self> {
        let weight = store.conv_weight(&format!("{name}.weight"), seed, out_c, in_c, kernel)?;
        let bias = store.zeros(&format!("{name}.bias"), [1, out_c, 1, 1])?;
        Ok(Self { weight, bias, in_c, out_c, kernel, relu })
    }

    pub fn forward<T: Element>(&self, store: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = x.conv2d(store.get(self.weight), Some(store.get(self.bias)), 1, self.kernel / 2)?;
        Ok(if self.relu { y.relu() } else { y })
    }
}
