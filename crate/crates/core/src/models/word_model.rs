//! Convolutional sentence classifier over word embeddings: parallel
//! convolutions of several widths, max-over-time pooling, concatenation and
//! a dense softmax layer.

use std::collections::HashMap;

use diffcore::{Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use super::{Evaluation, GradientField, Prediction, StepResult, Trainable};
use crate::rng::{substream, Stream};
use crate::{Error, Result};

pub const PAD_WORD: usize = 0;
pub const UNK_WORD: usize = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordModelConfig {
    pub dim: usize,
    pub widths: Vec<usize>,
    pub kernels: usize,
    pub classes: usize,
}

impl Default for WordModelConfig {
    fn default() -> Self {
        Self { dim: 50, widths: vec![3, 4, 5], kernels: 25, classes: 2 }
    }
}

/// Word ↔ row mapping; rows 0 and 1 are padding and unknown.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct WordIndex {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl WordIndex {
    /// Index over the given words (sorted, deduplicated) after the two
    /// reserved rows.
    pub fn new<I: IntoIterator<Item = String>>(words: I) -> Self {
        let mut sorted: Vec<String> = words.into_iter().collect();
        sorted.sort_unstable();
        sorted.dedup();
        let mut all = vec!["<pad>".to_string(), "<unk>".to_string()];
        all.extend(sorted.into_iter().filter(|w| w != "<pad>" && w != "<unk>"));
        all.into()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK_WORD)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

impl From<Vec<String>> for WordIndex {
    fn from(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { words, index }
    }
}

impl From<WordIndex> for Vec<String> {
    fn from(w: WordIndex) -> Self {
        w.words
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WordItem {
    pub ids: Vec<usize>,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WordModel {
    pub config: WordModelConfig,
    pub index: WordIndex,
    params: ParamSet,
}

struct Graph {
    logits: Var,
    onehot: Var,
    params: Vec<Var>,
}

impl WordModel {
    /// Random initialization, with embedding rows copied from `pretrained`
    /// wherever a vector of the right dimension exists.
    pub fn new(config: WordModelConfig, index: WordIndex, pretrained: Option<&HashMap<String, Vec<f64>>>, seed: u64) -> Result<Self> {
        if config.widths.is_empty() || config.widths.contains(&0) || config.kernels == 0 || config.classes < 2 {
            return Err(Error::Contract("word model needs positive widths, kernels and ≥ 2 classes".into()));
        }
        let mut rng = substream(seed, Stream::Init);
        let mut p = ParamSet::new();
        let e = p.push_uniform("embedding", vec![index.len(), config.dim], 0.25, &mut rng);
        if let Some(table) = pretrained {
            let mut emb = p.get(e).clone();
            for (row, word) in index.words().iter().enumerate() {
                if let Some(v) = table.get(word).filter(|v| v.len() == config.dim) {
                    emb.data_mut()[row * config.dim..(row + 1) * config.dim].copy_from_slice(v);
                }
            }
            p.set(e, Tensor::new(emb.shape().to_vec(), emb.into_data())?)?;
        }
        for &w in &config.widths {
            p.push_uniform(&format!("conv{w}.kernels"), vec![w, config.dim, config.kernels], (1.0 / (w * config.dim) as f64).sqrt(), &mut rng);
            p.push_constant(&format!("conv{w}.bias"), vec![config.kernels], 0.0);
        }
        let feat = config.kernels * config.widths.len();
        p.push_uniform("output.w", vec![feat, config.classes], (1.0 / feat as f64).sqrt(), &mut rng);
        p.push_constant("output.b", vec![config.classes], 0.0);
        Ok(Self { config, index, params: p })
    }

    pub fn from_params(config: WordModelConfig, index: WordIndex, params: ParamSet) -> Result<Self> {
        let fresh = Self::new(config, index, None, 0)?;
        if fresh.params.names() != params.names()
            || fresh.params.tensors().iter().zip(params.tensors()).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::Checkpoint("parameter names or shapes do not match the architecture".into()));
        }
        Ok(Self { params, ..fresh })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn encode(&self, tokens: &[&str]) -> Vec<usize> {
        tokens.iter().map(|t| self.index.id(t)).collect()
    }

    /// Minimum sentence length: the widest kernel.
    pub fn min_len(&self) -> usize {
        self.config.widths.iter().copied().max().unwrap_or(1)
    }

    /// Pads `ids` with [`PAD_WORD`] up to [`Self::min_len`].
    pub fn padded(&self, ids: &[usize]) -> Result<Vec<usize>> {
        if ids.is_empty() {
            return Err(Error::Degenerate("empty sentence".into()));
        }
        let mut out = ids.to_vec();
        out.resize(ids.len().max(self.min_len()), PAD_WORD);
        Ok(out)
    }

    pub fn onehot(&self, ids: &[usize]) -> Result<Tensor> {
        let ids = self.padded(ids)?;
        let v = self.index.len();
        let mut data = vec![0.0; ids.len() * v];
        for (i, &id) in ids.iter().enumerate() {
            if id >= v {
                return Err(Error::Contract(format!("word id {id} out of range")));
            }
            data[i * v + id] = 1.0;
        }
        Ok(Tensor::new(vec![ids.len(), v], data)?)
    }

    fn graph(&self, tape: &mut Tape, onehot: Tensor, trainable: bool, input_grad: bool) -> Result<Graph> {
        if onehot.rank() != 2 || onehot.shape()[1] != self.index.len() || onehot.shape()[0] < self.min_len() {
            return Err(Error::Diff(diffcore::DiffError::Shape(format!(
                "word input {:?} incompatible with vocabulary {} and min length {}",
                onehot.shape(),
                self.index.len(),
                self.min_len()
            ))));
        }
        let params = self.params.record(tape, trainable);
        let onehot = tape.leaf(onehot, input_grad);
        let emb = tape.matmul(onehot, params[0])?;
        let mut pooled = Vec::with_capacity(self.config.widths.len());
        for (k, &w) in self.config.widths.iter().enumerate() {
            let conv = tape.conv1d(emb, params[1 + 2 * k], w)?;
            let conv = tape.add_bias(conv, params[2 + 2 * k])?;
            let conv = tape.relu(conv)?;
            pooled.push(tape.max_over_time(conv)?);
        }
        let features = tape.concat_cols(&pooled)?;
        let out = 1 + 2 * self.config.widths.len();
        let logits = tape.affine(features, params[out], params[out + 1])?;
        Ok(Graph { logits, onehot, params })
    }

    fn evaluation(tape: &mut Tape, g: &Graph, label: usize) -> Result<(Var, Evaluation)> {
        let loss = tape.softmax_cross_entropy(g.logits, label)?;
        let probs = diffcore::softmax(tape.value(g.logits).data());
        Ok((loss, Evaluation { loss: tape.value(loss).item(), prediction: Prediction::from_probs(probs) }))
    }

    pub fn logits(&self, ids: &[usize]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let g = self.graph(&mut tape, self.onehot(ids)?, false, false)?;
        Ok(tape.value(g.logits).data().to_vec())
    }

    pub fn predict(&self, ids: &[usize]) -> Result<Prediction> {
        Ok(Prediction::from_probs(diffcore::softmax(&self.logits(ids)?)))
    }

    pub fn evaluate(&self, ids: &[usize], label: usize) -> Result<Evaluation> {
        let mut tape = Tape::new();
        let g = self.graph(&mut tape, self.onehot(ids)?, false, false)?;
        Ok(Self::evaluation(&mut tape, &g, label)?.1)
    }

    /// Loss at a real-valued `[len, |vocab|]` input.
    pub fn loss_dense(&self, onehot: &Tensor, label: usize) -> Result<f64> {
        let mut tape = Tape::new();
        let g = self.graph(&mut tape, onehot.clone(), false, false)?;
        Ok(Self::evaluation(&mut tape, &g, label)?.1.loss)
    }

    /// One forward and one backward pass; the gradient covers the padded
    /// sentence, shape `[len, |vocab|]`.
    pub fn input_gradient(&self, ids: &[usize], label: usize) -> Result<(Evaluation, GradientField)> {
        let mut tape = Tape::new();
        let g = self.graph(&mut tape, self.onehot(ids)?, false, true)?;
        let (loss, eval) = Self::evaluation(&mut tape, &g, label)?;
        let mut grads = tape.backward(loss)?;
        Ok((eval, GradientField::new(grads.take(g.onehot).expect("input leaf requires grad"))))
    }

    /// Current (possibly fine-tuned) embedding row of a word id.
    pub fn embedding_row(&self, id: usize) -> &[f64] {
        let d = self.config.dim;
        &self.params.get(0).data()[id * d..(id + 1) * d]
    }
}

impl Trainable for WordModel {
    type Item = WordItem;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn label(item: &WordItem) -> usize {
        item.label
    }

    fn step(&self, item: &WordItem) -> Result<StepResult> {
        let mut tape = Tape::new();
        let g = self.graph(&mut tape, self.onehot(&item.ids)?, true, false)?;
        let (loss, evaluation) = Self::evaluation(&mut tape, &g, item.label)?;
        let mut grads = tape.backward(loss)?;
        let param_grads = g.params.iter().map(|&p| grads.take(p).expect("trainable").into_data()).collect();
        Ok(StepResult { evaluation, param_grads })
    }

    fn predict_item(&self, item: &WordItem) -> Result<Prediction> {
        self.predict(&item.ids)
    }
}
