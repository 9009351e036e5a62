//! Named trainable parameters and their deterministic initialisation.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Index of a parameter inside its [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Clone, Debug)]
pub struct Parameter<T: Element> {
    pub name: String,
    pub tensor: Tensor<T>,
    pub trainable: bool,
}

/// Ordered collection of uniquely named parameters.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T: Element> {
    params: Vec<Parameter<T>>,
    by_name: HashMap<String, usize>,
}

/// 64-bit FNV-1a; stable across platforms and releases.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// RNG for one parameter. Seeding by name keeps each parameter's initial
/// values independent of which other layers exist.
pub fn param_rng(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(name.as_bytes()).rotate_left(17))
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new(), by_name: HashMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        let id = self.params.len();
        self.by_name.insert(name.clone(), id);
        let tensor = if tensor.requires_grad() { tensor } else { tensor.to_parameter() };
        self.params.push(Parameter { name, tensor, trainable: true });
        Ok(ParamId(id))
    }

    /// Conv weight `[out, in, k, k]` drawn from U(−s, s), s = √(6/(fan_in+fan_out)).
    pub fn conv_weight(&mut self, name: &str, seed: u64, out_c: usize, in_c: usize, k: usize) -> Result<ParamId> {
        let fan_in = (in_c * k * k) as f64;
        let fan_out = (out_c * k * k) as f64;
        let bound = (6.0 / (fan_in + fan_out)).sqrt();
        let mut rng = param_rng(seed, name);
        let shape: Shape = [out_c, in_c, k, k];
        let data = (0..out_c * in_c * k * k).map(|_| T::from_f64(rng.gen_range(-bound..bound))).collect();
        self.insert(name, Tensor::parameter(shape, data)?)
    }

    pub fn zeros(&mut self, name: &str, shape: Shape) -> Result<ParamId> {
        self.insert(name, Tensor::parameter(shape, vec![T::zero(); shape.iter().product()])?)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].tensor
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter<T>> {
        self.by_name.get(name).map(|&i| &self.params[i])
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Total number of scalar values.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn zero_grad(&self) {
        self.params.iter().for_each(|p| p.tensor.zero_grad());
    }

    /// Replaces a parameter's values, keeping its accumulated gradient.
    pub fn replace_values(&mut self, id: ParamId, data: Vec<T>) -> Result<()> {
        let p = &mut self.params[id.0];
        let fresh = Tensor::parameter(p.tensor.shape(), data)?;
        fresh.set_grad(p.tensor.grad());
        p.tensor = fresh;
        Ok(())
    }

    /// Loads values by name; shapes must match exactly.
    pub fn assign(&mut self, name: &str, shape: Shape, data: Vec<T>) -> Result<()> {
        let id = self
            .id(name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter `{name}`")))?;
        let have = self.get(id).shape();
        if have != shape {
            return Err(Error::Checkpoint(format!(
                "parameter `{name}` has shape {have:?}, checkpoint holds {shape:?}"
            )));
        }
        self.replace_values(id, data)
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut s = ParamStore::<f64>::new();
        s.zeros("a", [1, 1, 1, 1]).unwrap();
        assert!(s.zeros("a", [1, 1, 1, 1]).is_err());
    }

    #[test]
    fn init_is_bounded_and_name_seeded() {
        let mut s = ParamStore::<f64>::new();
        let a = s.conv_weight("conv.a", 1, 8, 4, 3).unwrap();
        let bound = (6.0f64 / (36.0 + 72.0)).sqrt();
        assert!(s.get(a).data().iter().all(|v| v.abs() < bound));

        let mut other = ParamStore::<f64>::new();
        other.conv_weight("unrelated", 1, 3, 3, 3).unwrap();
        let a2 = other.conv_weight("conv.a", 1, 8, 4, 3).unwrap();
        assert_eq!(s.get(a).data(), other.get(a2).data());

        let b = s.conv_weight("conv.b", 1, 8, 4, 3).unwrap();
        assert_ne!(s.get(a).data(), s.get(b).data());
    }

    #[test]
    fn replace_keeps_gradient_and_assign_checks_shape() {
        let mut s = ParamStore::<f64>::new();
        let id = s.zeros("w", [1, 1, 1, 2]).unwrap();
        s.get(id).set_grad(Some(vec![1.0, 2.0]));
        s.replace_values(id, vec![3.0, 4.0]).unwrap();
        assert_eq!(s.get(id).data(), &[3.0, 4.0]);
        assert_eq!(s.get(id).grad().unwrap(), vec![1.0, 2.0]);
        assert!(s.assign("w", [1, 1, 2, 1], vec![0.0, 0.0]).is_err());
        assert!(s.assign("nope", [1, 1, 1, 2], vec![0.0, 0.0]).is_err());
    }
}
