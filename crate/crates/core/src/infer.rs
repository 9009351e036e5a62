//! Sigmoid maps on the original (unpadded) grid.

use crate::data::Sample;
use crate::error::Result;
use crate::model::PoolNet;
use crate::tensor::Tensor;

pub struct Prediction {
    /// `1×1×H×W` saliency probabilities.
    pub saliency: Tensor<f32>,
    /// Fused edge probabilities, one map per side output.
    pub edges: Option<Vec<Tensor<f32>>>,
}

pub fn predict(model: &PoolNet<f32>, sample: &Sample) -> Result<Prediction> {
    let image = sample.image.detach();
    let out = model.forward(&image)?;
    let saliency = sample.crop_prediction(&out.saliency_logits.sigmoid())?;
    let edges = out
        .edge_logits
        .map(|sides| sides.iter().map(|s| sample.crop_prediction(&s.sigmoid())).collect::<Result<Vec<_>>>())
        .transpose()?;
    Ok(Prediction { saliency, edges })
}

/// Saliency map and binarized-source ground truth as `f64` pixel vectors.
pub fn map_pair(model: &PoolNet<f32>, sample: &Sample) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = predict(model, sample)?;
    Ok((p.saliency.to_f64_vec(), sample.original_target()?.to_f64_vec()))
}
