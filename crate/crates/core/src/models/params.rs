use diffcore::{Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Named parameter tensors in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self { names: Vec::new(), tensors: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    /// Uniform initialization in `[-scale, scale]`.
    pub fn push_uniform(&mut self, name: &str, shape: Vec<usize>, scale: f64, rng: &mut ChaCha8Rng) -> usize {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-scale..=scale)).collect();
        self.push(name, Tensor::new(shape, data).expect("finite init"))
    }

    pub fn push_constant(&mut self, name: &str, shape: Vec<usize>, value: f64) -> usize {
        let n: usize = shape.iter().product();
        self.push(name, Tensor::new(shape, vec![value; n]).expect("finite init"))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn get(&self, index: usize) -> &Tensor {
        &self.tensors[index]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn set(&mut self, index: usize, tensor: Tensor) -> Result<()> {
        if self.tensors[index].shape() != tensor.shape() {
            return Err(Error::Contract(format!(
                "parameter {} has shape {:?}, replacement has {:?}",
                self.names[index],
                self.tensors[index].shape(),
                tensor.shape()
            )));
        }
        self.tensors[index] = tensor;
        Ok(())
    }

    /// Registers every tensor on the tape, trainable or constant.
    pub fn record(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.leaf(t.clone(), trainable)).collect()
    }

    /// `p ← p − lr·g` for every parameter.
    pub fn sgd_step(&mut self, grads: &[Vec<f64>], lr: f64) -> Result<()> {
        for (t, g) in self.tensors.iter_mut().zip(grads) {
            for (p, d) in t.data_mut().iter_mut().zip(g) {
                *p -= lr * d;
            }
            if t.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::Diff(diffcore::DiffError::NonFinite("parameter update".into())));
            }
        }
        Ok(())
    }

    pub(crate) fn from_parts(names: Vec<String>, tensors: Vec<Tensor>) -> Self {
        Self { names, tensors }
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}
