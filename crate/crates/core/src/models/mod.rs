//! Attackable classifiers built on the differentiation tape.

mod char_model;
pub mod checkpoint;
mod params;
mod train;
mod word_model;

use diffcore::Tensor;

pub use char_model::{CharItem, CharModel, CharModelConfig, Probe};
pub use params::ParamSet;
pub use train::{clip_gradients, train, Augment, EpochMetrics, NoAugment, TrainConfig, TrainOutcome};
pub use word_model::{WordIndex, WordItem, WordModel, WordModelConfig, PAD_WORD, UNK_WORD};

use crate::Result;

/// Class decision with the full probability vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub class: usize,
    /// Softmax probability of `class`.
    pub confidence: f64,
    pub probs: Vec<f64>,
}

impl Prediction {
    /// Argmax with ties resolved to the lowest class index.
    pub fn from_probs(probs: Vec<f64>) -> Self {
        let mut class = 0;
        for (c, &p) in probs.iter().enumerate() {
            if p > probs[class] {
                class = c;
            }
        }
        Self { class, confidence: probs[class], probs }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub prediction: Prediction,
}

/// `∂J/∂x` with the shape of the one-hot input it was taken at.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField(Tensor);

impl GradientField {
    pub fn new(t: Tensor) -> Self {
        Self(t)
    }

    /// Entry for symbol `c` at slot `(i, j)`; for word-level fields (rank 2)
    /// use `at2`.
    pub fn at(&self, i: usize, j: usize, c: usize) -> f64 {
        let s = self.0.shape();
        self.0.data()[(i * s[1] + j) * s[2] + c]
    }

    pub fn at2(&self, i: usize, c: usize) -> f64 {
        self.0.data()[i * self.0.shape()[1] + c]
    }

    pub fn shape(&self) -> &[usize] {
        self.0.shape()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }
}

/// Loss, prediction and per-parameter gradients for one training item.
#[derive(Clone, Debug)]
pub struct StepResult {
    pub evaluation: Evaluation,
    pub param_grads: Vec<Vec<f64>>,
}

/// A model the SGD loop can update.
pub trait Trainable: Clone {
    type Item: Clone;

    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    fn label(item: &Self::Item) -> usize;
    fn step(&self, item: &Self::Item) -> Result<StepResult>;
    fn predict_item(&self, item: &Self::Item) -> Result<Prediction>;
}

/// Accuracy and confusion counts (`confusion[gold][predicted]`).
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
    pub count: usize,
}

impl EvalReport {
    pub fn error(&self) -> f64 {
        1.0 - self.accuracy
    }
}

pub fn evaluate<M: Trainable>(model: &M, items: &[M::Item], classes: usize) -> Result<EvalReport> {
    let mut confusion = vec![vec![0; classes]; classes];
    let mut correct = 0;
    for item in items {
        let p = model.predict_item(item)?;
        let gold = M::label(item);
        confusion[gold][p.class] += 1;
        if gold == p.class {
            correct += 1;
        }
    }
    let accuracy = if items.is_empty() { 0.0 } else { correct as f64 / items.len() as f64 };
    Ok(EvalReport { accuracy, confusion, count: items.len() })
}
