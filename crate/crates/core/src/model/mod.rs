//! The saliency network: VGG-style backbone, global guidance module (PPM +
//! guiding flows), top-down pathway with feature aggregation modules, a
//! one-channel saliency head and an optional edge branch.

mod backbone;
mod config;
mod edge;
mod fam;
mod ggm;
mod layers;

use std::path::Path;

pub use backbone::{Backbone, PyramidFeatures, PYRAMID_RATES};
pub use config::{AblationRow, ModelConfig, EDGE_COMPRESS_CHANNELS, EDGE_FUSE_CHANNELS, EDGE_LEVELS};
pub use edge::{EdgeBranch, EdgeOutput, ResidualBlock};
pub use fam::Fam;
pub use ggm::{GuidingFlow, Ppm, PpmBranch};
pub use layers::Conv;

pub(crate) use config::parse_bool;

use crate::checkpoint::Checkpoint;
use crate::element::Element;
use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct ModelOutput<T: Element> {
    /// One-channel logits at input resolution.
    pub saliency_logits: Tensor<T>,
    /// Three one-channel edge logits at input resolution, finest first.
    pub edge_logits: Option<Vec<Tensor<T>>>,
}

/// Which loss a training step optimises.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StepKind {
    Saliency,
    Edge,
}

/// Which losses can reach a parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRole {
    Shared,
    SaliencyOnly,
    EdgeOnly,
}

/// Knobs for probing the wiring in tests.
#[derive(Clone, Copy, Debug, Default)]
pub struct ForwardOptions {
    /// Skip the guiding-flow addend even when GGFs are enabled.
    pub drop_ggf_addend: bool,
}

/// Intermediate structure observed during one forward pass.
#[derive(Clone, Debug, Default)]
pub struct ForwardTrace {
    pub pyramid_shapes: Vec<[usize; 4]>,
    pub ppm_branches: Vec<PpmBranch>,
    /// Shape of each guiding-flow addend, levels 5 down to 2.
    pub ggf_shapes: Vec<[usize; 4]>,
    /// Shape of the fused map entering each level's aggregation, 5 down to 2.
    pub fused_shapes: Vec<[usize; 4]>,
    /// Sub-branch count of the FAM at each level, 5 down to 2 (0 = plain conv).
    pub fam_branches: Vec<usize>,
    pub edge_concat_channels: Option<usize>,
    pub head_in_channels: usize,
}

#[derive(Clone, Debug)]
enum LevelFuse {
    Fam(Fam),
    Conv(Conv),
}

#[derive(Clone, Debug)]
struct Level {
    lateral: Option<Conv>,
    /// 1×1 adapter for the coarser output when channel widths differ.
    transfer: Option<Conv>,
    ggf: Option<GuidingFlow>,
    fuse: LevelFuse,
}

/// Full network with its own parameter store.
#[derive(Clone, Debug)]
pub struct PoolNet<T: Element> {
    config: ModelConfig,
    seed: u64,
    store: ParamStore<T>,
    backbone: Backbone,
    ppm: Option<Ppm>,
    /// Levels 2..5.
    levels: Vec<Level>,
    edge: Option<EdgeBranch>,
    head: Conv,
}

impl<T: Element> PoolNet<T> {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let st = &mut store;
        let bw = &config.backbone_widths;
        let pc = &config.pyramid_channels;

        let backbone = Backbone::new(st, seed, bw)?;
        let ppm = config.enable_ppm.then(|| Ppm::new(st, seed, bw[4], pc[3], &config.ppm_sizes)).transpose()?;

        let mut levels = Vec::with_capacity(4);
        for level in 2..=5 {
            let i = level - 2;
            let lateral = if level == 5 && config.enable_ppm {
                None
            } else {
                Some(Conv::new(st, &format!("lateral.level{level}"), seed, bw[i + 1], pc[i], 1, false)?)
            };
            let transfer = (level < 5 && pc[i + 1] != pc[i])
                .then(|| Conv::new(st, &format!("transfer.level{level}"), seed, pc[i + 1], pc[i], 1, false))
                .transpose()?;
            let ggf = config.enable_ggf.then(|| GuidingFlow::new(st, seed, level, pc[3], pc[i])).transpose()?;
            let fuse = if config.enable_fam {
                LevelFuse::Fam(Fam::new(st, &format!("fam.level{level}"), seed, pc[i], &config.fam_rates)?)
            } else {
                LevelFuse::Conv(Conv::new(st, &format!("fuse.level{level}"), seed, pc[i], pc[i], 3, true)?)
            };
            levels.push(Level { lateral, transfer, ggf, fuse });
        }

        let edge = config
            .enable_edge
            .then(|| EdgeBranch::new(st, seed, &pc[..EDGE_LEVELS], &config.edge_widths))
            .transpose()?;
        let head_in = pc[0] + if config.enable_edge { EDGE_FUSE_CHANNELS } else { 0 };
        let head = Conv::new(st, "head.score", seed, head_in, 1, 1, false)?;

        Ok(Self { config: config.clone(), seed, store, backbone, ppm, levels, edge, head })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn parameter_count(&self) -> usize {
        self.store.scalar_count()
    }

    pub fn role(&self, name: &str) -> ParamRole {
        if EdgeBranch::is_edge_only(name) {
            ParamRole::EdgeOnly
        } else if name.starts_with("head.") || name.starts_with("edge.fuse.") {
            ParamRole::SaliencyOnly
        } else {
            ParamRole::Shared
        }
    }

    /// Parameters a loss of `kind` is expected to reach.
    pub fn params_for(&self, kind: StepKind) -> Vec<ParamId> {
        self.store
            .ids()
            .filter(|&id| {
                let role = self.role(self.store.name(id));
                match kind {
                    StepKind::Saliency => role != ParamRole::EdgeOnly,
                    StepKind::Edge => role != ParamRole::SaliencyOnly,
                }
            })
            .collect()
    }

    pub fn backbone_features(&self, image: &Tensor<T>) -> Result<PyramidFeatures<T>> {
        self.backbone.forward(&self.store, image)
    }

    pub fn forward(&self, image: &Tensor<T>) -> Result<ModelOutput<T>> {
        self.forward_with(image, ForwardOptions::default(), None)
    }

    pub fn forward_traced(&self, image: &Tensor<T>, opts: ForwardOptions) -> Result<(ModelOutput<T>, ForwardTrace)> {
        let mut trace = ForwardTrace::default();
        let out = self.forward_with(image, opts, Some(&mut trace))?;
        Ok((out, trace))
    }

    fn forward_with(
        &self,
        image: &Tensor<T>,
        opts: ForwardOptions,
        mut trace: Option<&mut ForwardTrace>,
    ) -> Result<ModelOutput<T>> {
        let st = &self.store;
        let pyramid = self.backbone.forward(st, image)?;
        if let Some(t) = trace.as_deref_mut() {
            t.pyramid_shapes = pyramid.levels.iter().map(|l| l.shape()).collect();
        }

        let c5 = pyramid.level(5);
        let guide = match &self.ppm {
            Some(ppm) => ppm.forward(st, c5, trace.as_deref_mut().map(|t| &mut t.ppm_branches))?,
            None => self.levels[3].lateral.as_ref().expect("lateral exists without PPM").forward(st, c5)?,
        };

        let mut outs: Vec<Tensor<T>> = Vec::with_capacity(4);
        for level in (2..=5).rev() {
            let lv = &self.levels[level - 2];
            let mut fused = match (&lv.lateral, level) {
                (_, 5) => guide.clone(),
                (Some(lat), _) => lat.forward(st, pyramid.level(level))?,
                (None, _) => unreachable!("only level 5 lacks a lateral"),
            };
            if let Some(coarser) = outs.last() {
                let adapted = match &lv.transfer {
                    Some(t) => t.forward(st, coarser)?,
                    None => coarser.clone(),
                };
                fused = fused.add(&adapted.upsample_bilinear(2)?)?;
            }
            if let Some(ggf) = &lv.ggf {
                if !opts.drop_ggf_addend {
                    let flow = ggf.inject(st, &guide)?;
                    if let Some(t) = trace.as_deref_mut() {
                        t.ggf_shapes.push(flow.shape());
                    }
                    fused = fused.add(&flow)?;
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                t.fused_shapes.push(fused.shape());
            }
            let out = match &lv.fuse {
                LevelFuse::Fam(fam) => {
                    if let Some(t) = trace.as_deref_mut() {
                        t.fam_branches.push(fam.branch_count());
                    }
                    fam.forward(st, &fused)?
                }
                LevelFuse::Conv(conv) => {
                    if let Some(t) = trace.as_deref_mut() {
                        t.fam_branches.push(0);
                    }
                    conv.forward(st, &fused)?
                }
            };
            outs.push(out);
        }
        // outs is coarse-to-fine: [out5, out4, out3, out2]
        let out2 = &outs[3];
        let input_size = (image.height(), image.width());

        let (head_in, edge_logits) = match &self.edge {
            Some(edge) => {
                let eo = edge.forward(st, &[&outs[3], &outs[2], &outs[1]], input_size)?;
                if let Some(t) = trace.as_deref_mut() {
                    t.edge_concat_channels = Some(eo.concat_channels);
                }
                (Tensor::concat_channels(&[out2, &eo.feature])?, Some(eo.logits))
            }
            None => (out2.clone(), None),
        };
        if let Some(t) = trace.as_deref_mut() {
            t.head_in_channels = head_in.channels();
        }
        let saliency_logits = self.head.forward(st, &head_in)?.upsample_bilinear(PYRAMID_RATES[0])?;
        Ok(ModelOutput { saliency_logits, edge_logits })
    }

    /// Parameter values as checkpoint records (f32 payload).
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        for p in self.store.iter() {
            ck.push(p.name.clone(), p.tensor.shape().to_vec(), p.tensor.data().iter().map(|v| v.as_f64() as f32).collect());
        }
        ck
    }

    /// Loads every model parameter from `ck`. Records with unknown names are
    /// ignored only when they carry the `@` prefix used for auxiliary state.
    pub fn load_checkpoint(&mut self, ck: &Checkpoint) -> Result<()> {
        for rec in &ck.records {
            if rec.name.starts_with('@') {
                continue;
            }
            let shape: [usize; 4] = rec.dims.as_slice().try_into().map_err(|_| {
                Error::Checkpoint(format!("record `{}` has rank {}, expected 4", rec.name, rec.dims.len()))
            })?;
            let data = rec.values.iter().map(|&v| T::from_f64(v as f64)).collect();
            self.store.assign(&rec.name, shape, data)?;
        }
        let missing: Vec<&str> =
            self.store.iter().map(|p| p.name.as_str()).filter(|n| ck.get(n).is_none()).collect();
        if !missing.is_empty() {
            return Err(Error::Checkpoint(format!("checkpoint lacks parameters: {}", missing.join(", "))));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(config: &ModelConfig, path: &Path) -> Result<Self> {
        let mut m = Self::new(config, 0)?;
        m.load_checkpoint(&Checkpoint::load(path)?)?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(h: usize, w: usize) -> Tensor<f32> {
        Tensor::from_fn([1, 3, h, w], |i| ((i * 7919 % 257) as f32) / 257.0)
    }

    #[test]
    fn desk_backbone_shapes() {
        let m = PoolNet::<f32>::new(&ModelConfig::desk(), 0).unwrap();
        let p = m.backbone_features(&image(64, 64)).unwrap();
        let shapes: Vec<_> = p.levels.iter().map(|l| l.shape()).collect();
        assert_eq!(shapes, [[1, 32, 32, 32], [1, 64, 16, 16], [1, 128, 8, 8], [1, 128, 4, 4]]);
        assert_eq!(p.rates(), [2, 4, 8, 16]);
    }

    #[test]
    fn indivisible_input_is_rejected() {
        let m = PoolNet::<f32>::new(&ModelConfig::tiny(2), 0).unwrap();
        assert!(matches!(m.forward(&image(40, 32)), Err(Error::Shape { .. })));
    }

    #[test]
    fn roles_partition_edge_parameters() {
        let m = PoolNet::<f32>::new(&ModelConfig::tiny(2).with_edge(true), 0).unwrap();
        assert_eq!(m.role("edge.level3.score.weight"), ParamRole::EdgeOnly);
        assert_eq!(m.role("edge.fuse.conv2.bias"), ParamRole::SaliencyOnly);
        assert_eq!(m.role("head.score.weight"), ParamRole::SaliencyOnly);
        assert_eq!(m.role("edge.level2.residual.conv1.weight"), ParamRole::Shared);
        let s = m.params_for(StepKind::Saliency).len();
        let e = m.params_for(StepKind::Edge).len();
        assert!(s < m.params().len() && e < m.params().len());
    }

    #[test]
    fn level_five_lateral_only_without_ppm() {
        let with = PoolNet::<f32>::new(&ModelConfig::tiny(2), 0).unwrap();
        assert!(with.params().by_name("lateral.level5.weight").is_none());
        let without = PoolNet::<f32>::new(&ModelConfig::tiny(2).with_row(AblationRow::GgfOnly), 0).unwrap();
        assert!(without.params().by_name("lateral.level5.weight").is_some());
    }
}
