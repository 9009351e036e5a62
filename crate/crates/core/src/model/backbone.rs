//! VGG-style bottom-up pathway.

use super::layers::Conv;
use crate::element::Element;
use crate::error::{Error, Result};
use crate::param::ParamStore;
use crate::tensor::Tensor;

/// Downsampling rate of C2..C5 relative to the input.
pub const PYRAMID_RATES: [usize; 4] = [2, 4, 8, 16];

/// Backbone feature maps C2..C5, finest first.
#[derive(Clone, Debug)]
pub struct PyramidFeatures<T: Element> {
    pub levels: [Tensor<T>; 4],
}

impl<T: Element> PyramidFeatures<T> {
    pub fn rates(&self) -> [usize; 4] {
        PYRAMID_RATES
    }

    /// Feature map of pyramid level `2..=5`.
    pub fn level(&self, level: usize) -> &Tensor<T> {
        &self.levels[level - 2]
    }
}

#[derive(Clone, Debug)]
pub struct Backbone {
    stages: Vec<[Conv; 2]>,
}

impl Backbone {
    pub fn new<T: Element>(store: &mut ParamStore<T>, seed: u64, widths: &[usize]) -> Result<Self> {
        let mut stages = Vec::with_capacity(widths.len());
        let mut in_c = 3;
        for (s, &w) in widths.iter().enumerate() {
            stages.push([
                Conv::new(store, &format!("backbone.stage{}.conv1", s + 1), seed, in_c, w, 3, true)?,
                Conv::new(store, &format!("backbone.stage{}.conv2", s + 1), seed, w, w, 3, true)?,
            ]);
            in_c = w;
        }
        Ok(Self { stages })
    }

    /// Runs the stages; each stage after the first starts with a 2× max pool.
    pub fn forward<T: Element>(&self, store: &ParamStore<T>, image: &Tensor<T>) -> Result<PyramidFeatures<T>> {
        let (h, w) = (image.height(), image.width());
        if h % 16 != 0 || w % 16 != 0 {
            return Err(Error::shape("backbone", format!("input {h}x{w} must be divisible by 16; pad it first")));
        }
        if image.channels() != 3 {
            return Err(Error::shape("backbone", format!("expected 3 input channels, got {}", image.channels())));
        }
        let mut x = image.clone();
        let mut outs = Vec::with_capacity(4);
        for (s, [c1, c2]) in self.stages.iter().enumerate() {
            if s > 0 {
                x = x.max_pool2d(2)?;
            }
            x = c2.forward(store, &c1.forward(store, &x)?)?;
            if s > 0 {
                outs.push(x.clone());
            }
        }
        let levels: [Tensor<T>; 4] = outs.try_into().expect("five stages give four pyramid levels");
        Ok(PyramidFeatures { levels })
    }
}
