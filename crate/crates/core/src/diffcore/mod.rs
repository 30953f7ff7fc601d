//! Dense `f64` tensors with a dynamic reverse-mode tape, an Adam optimizer
//! and a binary checkpoint container.
//!
//! Everything a model needs to train lives here: build a fresh [`Graph`]
//! per forward pass, register the [`ParamStore`] entries as named leaves,
//! call [`Graph::backward`] on a scalar loss and hand the gradient map to
//! [`adam_step`].

mod adam;
pub mod checkpoint;
mod graph;
mod tensor;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use graph::{Gradients, Graph, Var, COSINE_EPS};
pub use tensor::Tensor;

/// Named parameter tensors in a stable (sorted) order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
    frozen: BTreeSet<String>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) {
        self.tensors.insert(name.to_string(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    /// Looks up a tensor that must exist.
    pub fn require(&self, name: &str) -> crate::Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| crate::Error::Checkpoint(format!("missing parameter `{name}`")))
    }

    /// Marks a parameter as excluded from optimization.
    pub fn freeze(&mut self, name: &str) {
        self.frozen.insert(name.to_string());
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.frozen.contains(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::all_finite)
    }

    /// Registers every parameter on `graph`: trainable ones as named
    /// parameter leaves, frozen ones as constants.
    pub fn register(&self, graph: &mut Graph) -> BTreeMap<String, Var> {
        self.tensors
            .iter()
            .map(|(name, t)| {
                let v = if self.is_frozen(name) {
                    graph.constant(t.clone())
                } else {
                    graph.param(name, t.clone())
                };
                (name.clone(), v)
            })
            .collect()
    }

    /// Registers every parameter as a constant.
    pub fn register_frozen(&self, graph: &mut Graph) -> BTreeMap<String, Var> {
        self.tensors
            .iter()
            .map(|(name, t)| (name.clone(), graph.constant(t.clone())))
            .collect()
    }
}

/// Uniform initialization in `[-scale, scale]`.
pub fn uniform_init<R: Rng>(rng: &mut R, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-scale..=scale)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches length")
}

/// Glorot-uniform initialization for a `[fan_in, fan_out]` weight.
pub fn glorot<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let scale = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform_init(rng, &[fan_in, fan_out], scale)
}
