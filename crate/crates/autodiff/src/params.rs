use std::collections::HashMap;

use rand::Rng;

use crate::array::Array;
use crate::error::{AutodiffError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Array,
    pub grad: Array,
    pub trainable: bool,
    pub(crate) first_moment: Array,
    pub(crate) second_moment: Array,
}

/// Named parameters in creation order, with gradients and optimizer state.
#[derive(Clone, Debug, Default)]
pub struct ParameterStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
    pub(crate) adam_steps: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array, trainable: bool) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(AutodiffError::DuplicateParameter(name));
        }
        let id = ParamId(self.params.len());
        self.params.push(Parameter {
            grad: Array::zeros_like(&value),
            first_moment: Array::zeros_like(&value),
            second_moment: Array::zeros_like(&value),
            name: name.clone(),
            value,
            trainable,
        });
        self.by_name.insert(name, id);
        Ok(id)
    }

    /// Glorot-uniform initialised trainable matrix.
    pub fn add_glorot<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        self.add(name, Array::matrix(rows, cols, data)?, true)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> Result<ParamId> {
        self.add(name, Array::zeros(rows, cols), true)
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| AutodiffError::UnknownParameter(name.to_string()))
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Array {
        &self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Array {
        &self.params[id.0].grad
    }

    /// Replaces a parameter's value; the shape must not change.
    pub fn set_value(&mut self, id: ParamId, value: Array) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "set_value",
                left: p.value.shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        p.value = value;
        Ok(())
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        self.params[id.0].value.data_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, grad: &Array) {
        self.params[id.0].grad.add_assign(grad);
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    /// Total number of scalar trainable entries.
    pub fn trainable_size(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .flat_map(|p| p.grad.data())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales trainable gradients so their global norm is at most
    /// `max_norm`. Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let factor = max_norm / norm;
            for p in self.params.iter_mut().filter(|p| p.trainable) {
                p.grad.data_mut().iter_mut().for_each(|g| *g *= factor);
            }
        }
        norm
    }

    /// Copies values (not optimizer state) from `other` for every parameter
    /// present in both stores with identical shape.
    pub fn copy_values_from(&mut self, other: &ParameterStore) -> usize {
        let mut copied = 0;
        for p in &mut self.params {
            if let Some(&id) = other.by_name.get(&p.name) {
                let src = &other.params[id.0].value;
                if src.shape() == p.value.shape() {
                    p.value = src.clone();
                    copied += 1;
                }
            }
        }
        copied
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut s = ParameterStore::new();
        s.add_zeros("w", 2, 2).unwrap();
        assert!(matches!(
            s.add_zeros("w", 1, 1),
            Err(AutodiffError::DuplicateParameter(_))
        ));
        assert!(s.id("missing").is_err());
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut s = ParameterStore::new();
        let a = s.add_zeros("a", 1, 2).unwrap();
        let b = s.add_zeros("b", 1, 1).unwrap();
        s.params[a.0].grad = Array::row(vec![3.0, 0.0]).unwrap();
        s.params[b.0].grad = Array::row(vec![4.0]).unwrap();
        assert_eq!(s.clip_grad_norm(10.0), 5.0);
        assert_eq!(s.grad(b).data(), &[4.0]);
        assert_eq!(s.clip_grad_norm(1.0), 5.0);
        assert!((s.grad_norm() - 1.0).abs() < 1e-12);
        assert!((s.grad(a).data()[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn shapes_are_immutable() {
        let mut s = ParameterStore::new();
        let id = s.add_zeros("w", 2, 2).unwrap();
        assert!(s.set_value(id, Array::zeros(1, 4)).is_err());
        assert!(s.set_value(id, Array::filled(2, 2, 1.0)).is_ok());
    }
}
