//! Named parameter storage shared by every layer of a model.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Ordered map from module-path names to parameter tensors.
#[derive(Clone)]
pub struct ParamStore<S: Scalar = f64> {
    entries: Vec<(String, Tensor<S>)>,
    index: HashMap<String, usize>,
}

impl<S: Scalar> Default for ParamStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor<S>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        let id = self.entries.len();
        self.index.insert(name.clone(), id);
        self.entries.push((name, value));
        Ok(ParamId(id))
    }

    pub fn get(&self, id: ParamId) -> &Tensor<S> {
        &self.entries[id.0].1
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].0
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<S>> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Replaces a parameter value; the shape must not change.
    pub fn set(&mut self, id: ParamId, value: Tensor<S>) -> Result<()> {
        let slot = &mut self.entries[id.0];
        if slot.1.shape() != value.shape() {
            return Err(Error::ParamMismatch(format!(
                "`{}`: expected shape {:?}, got {:?}",
                slot.0,
                slot.1.shape(),
                value.shape()
            )));
        }
        slot.1 = if slot.1.requires_grad() {
            value.requires_grad_leaf()
        } else {
            value.detach()
        };
        Ok(())
    }

    pub fn set_by_name(&mut self, name: &str, value: Tensor<S>) -> Result<()> {
        let id = self
            .id_of(name)
            .ok_or_else(|| Error::ParamMismatch(format!("unknown parameter `{name}`")))?;
        self.set(id, value)
    }

    /// Same values, every parameter a gradient-requiring leaf.
    pub fn trainable(&self) -> Self {
        self.map_leaves(Tensor::requires_grad_leaf)
    }

    /// Same values, no parameter records gradients.
    pub fn frozen(&self) -> Self {
        self.map_leaves(Tensor::detach)
    }

    fn map_leaves(&self, f: impl Fn(&Tensor<S>) -> Tensor<S>) -> Self {
        ParamStore {
            entries: self.entries.iter().map(|(n, t)| (n.clone(), f(t))).collect(),
            index: self.index.clone(),
        }
    }

    pub fn cast<T: Scalar>(&self) -> Result<ParamStore<T>> {
        let mut entries = Vec::with_capacity(self.entries.len());
        for (n, t) in &self.entries {
            entries.push((n.clone(), t.cast::<T>()?));
        }
        Ok(ParamStore {
            entries,
            index: self.index.clone(),
        })
    }
}

/// Uniform fan-in initialization, `U(−1/√fan_in, 1/√fan_in)`.
pub fn uniform_fan_in<S: Scalar>(rng: &mut impl Rng, shape: &[usize], fan_in: usize) -> Result<Tensor<S>> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Ok(Tensor::from_f64(shape, &data)?)
}
