//! Adam with bias correction and L2 weight decay folded into the gradient.

use std::collections::HashMap;

use crate::element::Element;
use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Number of completed updates.
    pub step: u64,
    /// Per-parameter `(first moment, second moment)` keyed by name.
    pub moments: HashMap<String, (Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new(weight_decay: f64) -> Self {
        Self { beta1: BETA1, beta2: BETA2, eps: EPSILON, weight_decay, step: 0, moments: HashMap::new() }
    }

    /// One update of the listed parameters. Every listed trainable parameter
    /// must hold a gradient.
    pub fn step<T: Element>(&mut self, store: &mut ParamStore<T>, ids: &[ParamId], lr: f64) -> Result<()> {
        for &id in ids {
            if !store.get(id).has_grad() && self.is_trainable(store, id) {
                return Err(Error::MissingGrad(store.name(id).to_owned()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for &id in ids {
            if !self.is_trainable(store, id) {
                continue;
            }
            let tensor = store.get(id);
            let grad = tensor.grad().expect("checked above");
            let values: Vec<f64> = tensor.data().iter().map(|v| v.as_f64()).collect();
            let (m, v) = self
                .moments
                .entry(store.name(id).to_owned())
                .or_insert_with(|| (vec![0.0; values.len()], vec![0.0; values.len()]));
            let mut next = Vec::with_capacity(values.len());
            for (i, (&p, g)) in values.iter().zip(&grad).enumerate() {
                let g = g.as_f64() + self.weight_decay * p;
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                next.push(T::from_f64(p - lr * m_hat / (v_hat.sqrt() + self.eps)));
            }
            store.replace_values(id, next)?;
        }
        Ok(())
    }

    fn is_trainable<T: Element>(&self, store: &ParamStore<T>, id: ParamId) -> bool {
        store.by_name(store.name(id)).is_some_and(|p| p.trainable)
    }
}
