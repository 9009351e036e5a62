//! Losses, Adam, the learning-rate schedule and the alternating
//! saliency/edge training loop.

mod adam;
mod loss;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use adam::{AdamState, BETA1, BETA2, EPSILON};
pub use loss::{balanced_bce_loss, bce_loss, bce_term};

use crate::checkpoint::Checkpoint;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::model::{PoolNet, StepKind};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub lr_drop_epoch: usize,
    pub lr_drop_factor: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub joint_edge: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            weight_decay: 5e-4,
            epochs: 24,
            lr_drop_epoch: 15,
            lr_drop_factor: 10.0,
            batch_size: 1,
            seed: 0,
            joint_edge: false,
        }
    }
}

impl TrainConfig {
    pub const KEYS: &'static [&'static str] =
        &["lr", "weight_decay", "epochs", "lr_drop_epoch", "lr_drop_factor", "batch_size", "seed", "joint_edge"];

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.lr_drop_epoch >= self.epochs {
            return bad(format!("lr_drop_epoch ({}) must be < epochs ({})", self.lr_drop_epoch, self.epochs));
        }
        if !(self.lr_drop_factor > 0.0 && self.lr_drop_factor.is_finite()) {
            return bad(format!("lr_drop_factor must be > 0, got {}", self.lr_drop_factor));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        Ok(())
    }

    /// `key = value` pairs accepted by [`TrainConfig::set`].
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("lr", self.lr.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("epochs", self.epochs.to_string()),
            ("lr_drop_epoch", self.lr_drop_epoch.to_string()),
            ("lr_drop_factor", self.lr_drop_factor.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("seed", self.seed.to_string()),
            ("joint_edge", self.joint_edge.to_string()),
        ]
    }

    /// Sets one field from its textual form. Returns `false` for an unknown key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn num<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
            value.trim().parse().map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
        }
        match key {
            "lr" => self.lr = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "lr_drop_epoch" => self.lr_drop_epoch = num(key, value)?,
            "lr_drop_factor" => self.lr_drop_factor = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "joint_edge" => self.joint_edge = crate::model::parse_bool(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Learning rate for a zero-based epoch.
pub fn lr_at(epoch: usize, config: &TrainConfig) -> f64 {
    if epoch < config.lr_drop_epoch {
        config.lr
    } else {
        config.lr / config.lr_drop_factor
    }
}

/// Mirrors image and target together with probability 0.5.
pub fn augment_hflip<R: Rng>(sample: &Sample, rng: &mut R) -> Sample {
    if rng.gen_bool(0.5) {
        sample.hflip()
    } else {
        sample.clone()
    }
}

/// One optimizer step: which loss and which samples feed it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlannedStep {
    pub kind: StepKind,
    pub samples: Vec<usize>,
}

/// Step order for one epoch. Saliency batches walk the saliency set once;
/// in joint mode each is followed by an edge batch, cycling the edge set
/// from `edge_offset`.
pub fn epoch_schedule(n_sal: usize, n_edge: usize, batch: usize, joint: bool, edge_offset: usize) -> Vec<PlannedStep> {
    let mut steps = Vec::new();
    let mut e = edge_offset;
    for start in (0..n_sal).step_by(batch.max(1)) {
        let samples: Vec<usize> = (start..(start + batch).min(n_sal)).collect();
        let len = samples.len();
        steps.push(PlannedStep { kind: StepKind::Saliency, samples });
        if joint && n_edge > 0 {
            let samples = (0..len).map(|k| (e + k) % n_edge).collect();
            e = (e + len) % n_edge;
            steps.push(PlannedStep { kind: StepKind::Edge, samples });
        }
    }
    steps
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    /// Global one-based step number.
    pub step: u64,
    pub kind: StepKind,
    /// Dataset indices fed to this step.
    pub samples: Vec<usize>,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Default)]
pub struct EpochSummary {
    pub epoch: usize,
    pub records: Vec<StepRecord>,
}

impl EpochSummary {
    pub fn mean_loss(&self, kind: StepKind) -> Option<f64> {
        let v: Vec<f64> = self.records.iter().filter(|r| r.kind == kind).map(|r| r.loss).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

pub const LOG_HEADER: &str = "epoch,step,loss_type,loss_value,lr";

pub fn write_log_rows<W: Write>(out: &mut W, records: &[StepRecord]) -> std::io::Result<()> {
    for r in records {
        let kind = match r.kind {
            StepKind::Saliency => "sal",
            StepKind::Edge => "edge",
        };
        writeln!(out, "{},{},{},{:e},{:e}", r.epoch, r.step, kind, r.loss, r.lr)?;
    }
    Ok(())
}

/// Loss of one sample for a step kind.
pub fn sample_loss(model: &PoolNet<f32>, sample: &Sample, kind: StepKind) -> Result<Tensor<f32>> {
    let out = model.forward(&sample.image)?;
    match kind {
        StepKind::Saliency => bce_loss(&out.saliency_logits, &sample.target),
        StepKind::Edge => {
            let sides = out
                .edge_logits
                .ok_or_else(|| Error::Config("edge step requested but the model has no edge branch".into()))?;
            let mut total: Option<Tensor<f32>> = None;
            for side in &sides {
                let l = balanced_bce_loss(side, &sample.target)?;
                total = Some(match total {
                    Some(t) => t.add(&l)?,
                    None => l,
                });
            }
            total.ok_or_else(|| Error::Config("edge branch produced no side outputs".into()))
        }
    }
}

const AUX_STEP: &str = "@step";
const AUX_EPOCH: &str = "@epoch";
const AUX_EDGE_CURSOR: &str = "@edge_cursor";
const AUX_M: &str = "@adam.m/";
const AUX_V: &str = "@adam.v/";

/// Owns a model and its optimizer state for the duration of training.
pub struct Trainer {
    pub model: PoolNet<f32>,
    pub config: TrainConfig,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: usize,
    edge_cursor: usize,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(model: PoolNet<f32>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if config.joint_edge && !model.config().enable_edge {
            return Err(Error::Config("joint_edge requires the edge branch (enable_edge = true)".into()));
        }
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xa11e_47a7e);
        let adam = AdamState::new(config.weight_decay);
        Ok(Self { model, config, adam, epoch: 0, edge_cursor: 0, rng })
    }

    /// Completed optimizer steps.
    pub fn step_count(&self) -> u64 {
        self.adam.step
    }

    /// Runs one step over `batch`, averaging the per-sample losses.
    pub fn step(&mut self, kind: StepKind, batch: &[&Sample], lr: f64) -> Result<f64> {
        let params = self.model.params_for(kind);
        self.model.params().zero_grad();
        let mut total = 0.0;
        for s in batch {
            let s = augment_hflip(s, &mut self.rng);
            let loss = sample_loss(&self.model, &s, kind)?.scale(1.0 / batch.len() as f64);
            let v = loss.item() as f64;
            if !v.is_finite() {
                self.model.params().zero_grad();
                return Err(Error::Numeric(format!(
                    "non-finite {} loss at step {}",
                    kind_name(kind),
                    self.adam.step + 1
                )));
            }
            loss.backward()?;
            total += v;
        }
        self.adam.step(self.model.params_mut(), &params, lr)?;
        self.model.params().zero_grad();
        Ok(total)
    }

    /// One pass over the saliency set, alternating with edge steps in joint
    /// mode.
    pub fn train_epoch(&mut self, saliency: &[Sample], edge: &[Sample]) -> Result<EpochSummary> {
        if saliency.is_empty() {
            return Err(Error::Config("saliency dataset is empty".into()));
        }
        if self.config.joint_edge && edge.is_empty() {
            return Err(Error::Config("joint_edge requires a non-empty edge dataset".into()));
        }
        let lr = lr_at(self.epoch.min(self.config.epochs - 1), &self.config);
        let plan = epoch_schedule(saliency.len(), edge.len(), self.config.batch_size, self.config.joint_edge, self.edge_cursor);
        let mut summary = EpochSummary { epoch: self.epoch, records: Vec::with_capacity(plan.len()) };
        for p in &plan {
            let data = match p.kind {
                StepKind::Saliency => saliency,
                StepKind::Edge => edge,
            };
            let batch: Vec<&Sample> = p.samples.iter().map(|&i| &data[i]).collect();
            let loss = self.step(p.kind, &batch, lr)?;
            if p.kind == StepKind::Edge {
                self.edge_cursor = (self.edge_cursor + batch.len()) % edge.len();
            }
            summary.records.push(StepRecord {
                epoch: self.epoch,
                step: self.adam.step,
                kind: p.kind,
                samples: p.samples.clone(),
                loss,
                lr,
            });
        }
        self.epoch += 1;
        Ok(summary)
    }

    /// Model parameters plus optimizer and schedule state.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = self.model.to_checkpoint();
        // f32 holds integers exactly up to 2^24.
        ck.push(AUX_STEP, vec![1], vec![self.adam.step as f32]);
        ck.push(AUX_EPOCH, vec![1], vec![self.epoch as f32]);
        ck.push(AUX_EDGE_CURSOR, vec![1], vec![self.edge_cursor as f32]);
        let mut names: Vec<&String> = self.adam.moments.keys().collect();
        names.sort();
        for name in names {
            let (m, v) = &self.adam.moments[name];
            ck.push(format!("{AUX_M}{name}"), vec![m.len()], m.iter().map(|&x| x as f32).collect());
            ck.push(format!("{AUX_V}{name}"), vec![v.len()], v.iter().map(|&x| x as f32).collect());
        }
        ck
    }

    /// Restores parameters and, when present, optimizer and schedule state.
    pub fn resume(&mut self, ck: &Checkpoint) -> Result<()> {
        self.model.load_checkpoint(ck)?;
        let scalar = |name: &str| ck.get(name).and_then(|r| r.values.first()).map(|&v| v as u64);
        self.adam.step = scalar(AUX_STEP).unwrap_or(0);
        self.epoch = scalar(AUX_EPOCH).unwrap_or(0) as usize;
        self.edge_cursor = scalar(AUX_EDGE_CURSOR).unwrap_or(0) as usize;
        self.adam.moments.clear();
        for rec in &ck.records {
            let Some(name) = rec.name.strip_prefix(AUX_M) else { continue };
            let v = ck
                .get(&format!("{AUX_V}{name}"))
                .ok_or_else(|| Error::Checkpoint(format!("`{}` has no matching second moment", rec.name)))?;
            let widen = |x: &[f32]| x.iter().map(|&x| x as f64).collect::<Vec<f64>>();
            self.adam.moments.insert(name.to_owned(), (widen(&rec.values), widen(&v.values)));
        }
        Ok(())
    }
}

fn kind_name(kind: StepKind) -> &'static str {
    match kind {
        StepKind::Saliency => "saliency",
        StepKind::Edge => "edge",
    }
}
