//! Edge branch: per-level residual transform, 16-channel compression, a
//! one-channel edge score, and a 48-channel fusion feature for the saliency
//! head.

use super::config::{EDGE_COMPRESS_CHANNELS, EDGE_FUSE_CHANNELS, EDGE_LEVELS};
use super::layers::Conv;
use crate::element::Element;
use crate::error::Result;
use crate::param::ParamStore;
use crate::tensor::Tensor;

/// `x + conv2(relu(conv1(x)))`.
#[derive(Clone, Debug)]
pub struct ResidualBlock {
    conv1: Conv,
    conv2: Conv,
}

impl ResidualBlock {
    pub fn new<T: Element>(store: &mut ParamStore<T>, name: &str, seed: u64, channels: usize) -> Result<Self> {
        Ok(Self {
            conv1: Conv::new(store, &format!("{name}.conv1"), seed, channels, channels, 3, true)?,
            conv2: Conv::new(store, &format!("{name}.conv2"), seed, channels, channels, 3, false)?,
        })
    }

    pub fn forward<T: Element>(&self, store: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.add(&self.conv2.forward(store, &self.conv1.forward(store, x)?)?)
    }
}

#[derive(Clone, Debug)]
struct EdgeLevel {
    level: usize,
    project: Option<Conv>,
    residual: ResidualBlock,
    compress: Conv,
    score: Conv,
}

#[derive(Clone, Debug)]
pub struct EdgeBranch {
    levels: Vec<EdgeLevel>,
    fuse: Vec<Conv>,
}

pub struct EdgeOutput<T: Element> {
    /// One-channel edge logits at input resolution, finest level first.
    pub logits: Vec<Tensor<T>>,
    /// 48-channel feature at the finest pyramid level.
    pub feature: Tensor<T>,
    /// Channel count of the concatenated compressed maps.
    pub concat_channels: usize,
}

impl EdgeBranch {
    /// `in_widths` / `widths` are the top-down and residual widths of
    /// levels 2, 3, 4.
    pub fn new<T: Element>(store: &mut ParamStore<T>, seed: u64, in_widths: &[usize], widths: &[usize]) -> Result<Self> {
        let mut levels = Vec::with_capacity(EDGE_LEVELS);
        for (i, (&in_c, &w)) in in_widths.iter().zip(widths).enumerate() {
            let level = i + 2;
            let name = format!("edge.level{level}");
            let project = (in_c != w)
                .then(|| Conv::new(store, &format!("{name}.project"), seed, in_c, w, 1, false))
                .transpose()?;
            levels.push(EdgeLevel {
                level,
                project,
                residual: ResidualBlock::new(store, &format!("{name}.residual"), seed, w)?,
                compress: Conv::new(store, &format!("{name}.compress"), seed, w, EDGE_COMPRESS_CHANNELS, 3, true)?,
                score: Conv::new(store, &format!("{name}.score"), seed, EDGE_COMPRESS_CHANNELS, 1, 1, false)?,
            });
        }
        let concat = EDGE_COMPRESS_CHANNELS * EDGE_LEVELS;
        let fuse = (0..3)
            .map(|i| {
                let in_c = if i == 0 { concat } else { EDGE_FUSE_CHANNELS };
                Conv::new(store, &format!("edge.fuse.conv{}", i + 1), seed, in_c, EDGE_FUSE_CHANNELS, 3, true)
            })
            .collect::<Result<_>>()?;
        Ok(Self { levels, fuse })
    }

    /// Parameter names that only the edge loss reaches.
    pub fn is_edge_only(name: &str) -> bool {
        name.starts_with("edge.level") && name.contains(".score.")
    }

    /// `outs` holds the top-down outputs of levels 2, 3, 4.
    pub fn forward<T: Element>(
        &self,
        store: &ParamStore<T>,
        outs: &[&Tensor<T>],
        input_size: (usize, usize),
    ) -> Result<EdgeOutput<T>> {
        let finest = (outs[0].height(), outs[0].width());
        let mut logits = Vec::with_capacity(EDGE_LEVELS);
        let mut compressed = Vec::with_capacity(EDGE_LEVELS);
        for (lvl, x) in self.levels.iter().zip(outs) {
            let x = match &lvl.project {
                Some(p) => p.forward(store, x)?,
                None => (*x).clone(),
            };
            let c = lvl.compress.forward(store, &lvl.residual.forward(store, &x)?)?;
            let rate = 1 << (lvl.level - 1);
            let score = lvl.score.forward(store, &c)?;
            logits.push(if score.height() * rate == input_size.0 && score.width() * rate == input_size.1 {
                score.upsample_bilinear(rate)?
            } else {
                score.resize_bilinear(input_size.0, input_size.1)?
            });
            compressed.push(c.resize_bilinear(finest.0, finest.1)?);
        }
        let refs: Vec<&Tensor<T>> = compressed.iter().collect();
        let mut feature = Tensor::concat_channels(&refs)?;
        let concat_channels = feature.channels();
        for conv in &self.fuse {
            feature = conv.forward(store, &feature)?;
        }
        Ok(EdgeOutput { logits, feature, concat_channels })
    }
}
