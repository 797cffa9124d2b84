//! Named parameter tensors plus their gradient accumulators. Iteration is
//! always in sorted-name order so every walk over a model is deterministic.

use std::collections::BTreeMap;

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct ParameterSet {
    values: BTreeMap<String, Tensor>,
    grads: BTreeMap<String, Tensor>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter with a zeroed gradient; duplicate names are a bug.
    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<()> {
        if self.values.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter name {name:?}")));
        }
        self.grads.insert(name.to_string(), Tensor::zeros(&value.shape));
        self.values.insert(name.to_string(), value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.values.get(name).ok_or_else(|| Error::Config(format!("unknown parameter {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.values.get_mut(name).ok_or_else(|| Error::Config(format!("unknown parameter {name:?}")))
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor> {
        self.grads.get(name).ok_or_else(|| Error::Config(format!("unknown parameter {name:?}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.values.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sorted parameter names.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(|s| s.as_str())
    }

    /// Sorted (name, value) pairs.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// `grad[name] += delta`; additive so repeated backward passes stack.
    pub fn accumulate_grad(&mut self, name: &str, delta: &Tensor) -> Result<()> {
        let g = self
            .grads
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name:?}")))?;
        g.add_assign(delta)
    }

    pub fn zero_grads(&mut self) {
        for g in self.grads.values_mut() {
            g.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.values.values().map(|t| t.len()).sum()
    }

    /// Exponential moving average pull toward `src`:
    /// `self = m * self + (1 - m) * src`, elementwise over matching names.
    pub fn ema_update(&mut self, src: &ParameterSet, m: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&m) {
            return Err(Error::Domain(format!("ema coefficient {m} outside [0, 1]")));
        }
        for (name, mine) in self.values.iter_mut() {
            let theirs = src
                .values
                .get(name)
                .ok_or_else(|| Error::Config(format!("ema source missing parameter {name:?}")))?;
            if theirs.shape != mine.shape {
                return Err(Error::Shape {
                    op: "ema_update",
                    detail: format!("{name}: {:?} vs {:?}", mine.shape, theirs.shape),
                });
            }
            for (a, b) in mine.data.iter_mut().zip(&theirs.data) {
                *a = m * *a + (1.0 - m) * b;
            }
        }
        Ok(())
    }
}
