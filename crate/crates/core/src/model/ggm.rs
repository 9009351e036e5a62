//! Global guidance: a pyramid pooling module on top of the backbone and the
//! guiding flows that carry its output to every pyramid level.

use super::layers::Conv;
use crate::element::Element;
use crate::error::Result;
use crate::param::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Ppm {
    sizes: Vec<usize>,
    pooled: Vec<Conv>,
    global: Conv,
    fuse: Conv,
}

/// Spatial size at which each PPM branch operates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PpmBranch {
    Identity(usize, usize),
    Adaptive(usize, usize),
    Global,
}

impl PpmBranch {
    pub fn size(&self) -> (usize, usize) {
        match *self {
            PpmBranch::Identity(h, w) | PpmBranch::Adaptive(h, w) => (h, w),
            PpmBranch::Global => (1, 1),
        }
    }
}

impl Ppm {
    pub fn new<T: Element>(
        store: &mut ParamStore<T>,
        seed: u64,
        in_c: usize,
        out_c: usize,
        sizes: &[usize],
    ) -> Result<Self> {
        let pooled = sizes
            .iter()
            .map(|s| Conv::new(store, &format!("ppm.pool{s}"), seed, in_c, in_c, 1, true))
            .collect::<Result<_>>()?;
        let global = Conv::new(store, "ppm.global", seed, in_c, in_c, 1, true)?;
        let fuse = Conv::new(store, "ppm.fuse", seed, in_c * (sizes.len() + 2), out_c, 3, true)?;
        Ok(Self { sizes: sizes.to_vec(), pooled, global, fuse })
    }

    pub fn branch_count(&self) -> usize {
        self.sizes.len() + 2
    }

    pub fn forward<T: Element>(
        &self,
        store: &ParamStore<T>,
        c5: &Tensor<T>,
        trace: Option<&mut Vec<PpmBranch>>,
    ) -> Result<Tensor<T>> {
        let (h, w) = (c5.height(), c5.width());
        let mut record = vec![PpmBranch::Identity(h, w)];
        let mut branches = vec![c5.clone()];
        for (&s, conv) in self.sizes.iter().zip(&self.pooled) {
            let pooled = c5.adaptive_avg_pool2d(s, s)?;
            record.push(PpmBranch::Adaptive(pooled.height(), pooled.width()));
            branches.push(conv.forward(store, &pooled)?.resize_bilinear(h, w)?);
        }
        let g = c5.global_avg_pool();
        record.push(PpmBranch::Global);
        debug_assert_eq!(g.shape()[2..], [1, 1]);
        branches.push(self.global.forward(store, &g)?.resize_bilinear(h, w)?);
        if let Some(t) = trace {
            *t = record;
        }
        let refs: Vec<&Tensor<T>> = branches.iter().collect();
        self.fuse.forward(store, &Tensor::concat_channels(&refs)?)
    }
}

/// Per-level channel adapter for one guiding flow.
#[derive(Clone, Debug)]
pub struct GuidingFlow {
    level: usize,
    adapter: Conv,
}

impl GuidingFlow {
    pub fn new<T: Element>(
        store: &mut ParamStore<T>,
        seed: u64,
        level: usize,
        in_c: usize,
        out_c: usize,
    ) -> Result<Self> {
        Ok(Self { level, adapter: Conv::new(store, &format!("ggf.level{level}"), seed, in_c, out_c, 1, false)? })
    }

    /// Upsampling factor from the coarsest level: 8, 4, 2, 1 for levels 2..5.
    pub fn factor(&self) -> usize {
        1 << (5 - self.level)
    }

    /// Adapts channels at the coarse resolution, then upsamples.
    pub fn inject<T: Element>(&self, store: &ParamStore<T>, guide: &Tensor<T>) -> Result<Tensor<T>> {
        self.adapter.forward(store, guide)?.upsample_bilinear(self.factor())
    }
}
