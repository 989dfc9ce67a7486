//! Character-aware classifier: per-word character embeddings, temporal
//! convolution with max-over-time pooling, highway layers, then an LSTM over
//! the word representations whose last hidden state feeds a dense layer.

use diffcore::{Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use super::{Evaluation, GradientField, Prediction, StepResult, Trainable};
use crate::corpus::{Alphabet, EncodeOptions, LabeledExample, OneHotText, WordVocab};
use crate::rng::{substream, Stream};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharModelConfig {
    pub encode: EncodeOptions,
    pub char_dim: usize,
    pub kernel_width: usize,
    pub kernels: usize,
    pub highway_layers: usize,
    pub hidden: usize,
    pub lstm_layers: usize,
    pub classes: usize,
}

impl Default for CharModelConfig {
    fn default() -> Self {
        Self {
            encode: EncodeOptions::default(),
            char_dim: 16,
            kernel_width: 5,
            kernels: 64,
            highway_layers: 1,
            hidden: 64,
            lstm_layers: 1,
            classes: 4,
        }
    }
}

impl CharModelConfig {
    fn validate(&self) -> Result<()> {
        if self.kernel_width == 0 || self.kernel_width > self.encode.max_chars {
            return Err(Error::Contract(format!(
                "kernel width {} must lie in 1..={}",
                self.kernel_width, self.encode.max_chars
            )));
        }
        if self.classes < 2 || self.lstm_layers == 0 || self.hidden == 0 || self.kernels == 0 || self.char_dim == 0 {
            return Err(Error::Contract("model sizes must be positive (and at least two classes)".into()));
        }
        Ok(())
    }
}

/// Positions of each parameter inside the [`ParamSet`].
#[derive(Clone, Copy, Debug)]
struct Layout {
    highway_layers: usize,
    lstm_layers: usize,
}

impl Layout {
    const EMBEDDING: usize = 0;
    const CONV_KERNELS: usize = 1;
    const CONV_BIAS: usize = 2;

    fn highway(&self, layer: usize) -> usize {
        3 + 4 * layer
    }

    fn lstm(&self, layer: usize) -> usize {
        3 + 4 * self.highway_layers + 2 * layer
    }

    fn output(&self) -> usize {
        3 + 4 * self.highway_layers + 2 * self.lstm_layers
    }
}

/// One training item: an encoded example plus an optional additive
/// perturbation of its character embeddings (`[active_words·n, char_dim]`).
#[derive(Clone, Debug)]
pub struct CharItem {
    pub x: OneHotText,
    pub label: usize,
    pub embed_delta: Option<Tensor>,
}

impl From<&LabeledExample> for CharItem {
    fn from(ex: &LabeledExample) -> Self {
        Self { x: ex.x.clone(), label: ex.label, embed_delta: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CharModel {
    pub config: CharModelConfig,
    pub alphabet: Alphabet,
    /// Training vocabulary, carried with the model for attack constraints
    /// and neighbor probes.
    pub vocab: WordVocab,
    params: ParamSet,
}

struct Graph {
    logits: Var,
    onehot: Var,
    embedded: Var,
    highway: Var,
    params: Vec<Var>,
    active: usize,
}

#[derive(Clone, Copy)]
struct Record {
    trainable: bool,
    input_grad: bool,
}

impl CharModel {
    pub fn new(config: CharModelConfig, alphabet: Alphabet, vocab: WordVocab, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = substream(seed, Stream::Init);
        let mut p = ParamSet::new();
        let (v, d, k, w, h) = (alphabet.len(), config.char_dim, config.kernels, config.kernel_width, config.hidden);
        p.push_uniform("embedding", vec![v, d], 0.5, &mut rng);
        p.push_uniform("conv.kernels", vec![w, d, k], (1.0 / (w * d) as f64).sqrt(), &mut rng);
        p.push_constant("conv.bias", vec![k], 0.0);
        let hw_scale = (1.0 / k as f64).sqrt();
        for l in 0..config.highway_layers {
            p.push_uniform(&format!("highway{l}.transform.w"), vec![k, k], hw_scale, &mut rng);
            p.push_constant(&format!("highway{l}.transform.b"), vec![k], 0.0);
            p.push_uniform(&format!("highway{l}.gate.w"), vec![k, k], hw_scale, &mut rng);
            p.push_constant(&format!("highway{l}.gate.b"), vec![k], -2.0);
        }
        let lstm_scale = (1.0 / h as f64).sqrt();
        for l in 0..config.lstm_layers {
            let input = if l == 0 { k } else { h };
            p.push_uniform(&format!("lstm{l}.w"), vec![input + h, 4 * h], lstm_scale, &mut rng);
            // forget-gate bias starts at 1
            let bias: Vec<f64> = (0..4 * h).map(|i| if (h..2 * h).contains(&i) { 1.0 } else { 0.0 }).collect();
            p.push(format!("lstm{l}.b"), Tensor::new(vec![4 * h], bias)?);
        }
        p.push_uniform("output.w", vec![h, config.classes], lstm_scale, &mut rng);
        p.push_constant("output.b", vec![config.classes], 0.0);
        Ok(Self { config, alphabet, vocab, params: p })
    }

    /// Rebuilds a model from stored parameters, checking names and shapes.
    pub fn from_params(config: CharModelConfig, alphabet: Alphabet, vocab: WordVocab, params: ParamSet) -> Result<Self> {
        let fresh = Self::new(config, alphabet, vocab, 0)?;
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

    fn layout(&self) -> Layout {
        Layout { highway_layers: self.config.highway_layers, lstm_layers: self.config.lstm_layers }
    }

    fn check_shape(&self, shape: [usize; 3]) -> Result<()> {
        let expected = [self.config.encode.max_words, self.config.encode.max_chars, self.alphabet.len()];
        if shape != expected {
            return Err(Error::Diff(diffcore::DiffError::Shape(format!(
                "input shape {shape:?} does not match model shape {expected:?}"
            ))));
        }
        Ok(())
    }

    /// Dense one-hot rows for the active words of `x`, and their lengths.
    fn active_onehot(&self, x: &OneHotText) -> Result<(Vec<f64>, Vec<usize>)> {
        self.check_shape(x.shape())?;
        let active = x.active_words();
        let (n, v) = (self.config.encode.max_chars, self.alphabet.len());
        let mut data = vec![0.0; active * n * v];
        for i in 0..active {
            for j in 0..n {
                data[(i * n + j) * v + x.symbol(i, j)] = 1.0;
            }
        }
        Ok((data, x.lengths()[..active].to_vec()))
    }

    /// Max-over-time only sees convolution windows that overlap a real
    /// character of the word (the first window for an empty word), so runs
    /// of identical all-padding windows never tie for the maximum.
    fn graph(&self, tape: &mut Tape, onehot: Vec<f64>, lengths: &[usize], delta: Option<&Tensor>, rec: Record) -> Result<Graph> {
        let cfg = &self.config;
        let active = lengths.len();
        let (n, v, d, h) = (cfg.encode.max_chars, self.alphabet.len(), cfg.char_dim, cfg.hidden);
        let lay = self.layout();
        let params = self.params.record(tape, rec.trainable);

        let onehot = tape.leaf(Tensor::new(vec![active * n, v], onehot)?, rec.input_grad);
        let embedded = tape.matmul(onehot, params[Layout::EMBEDDING])?;
        let mut emb = embedded;
        if let Some(delta) = delta {
            let delta = tape.constant(delta.clone());
            emb = tape.add(emb, delta)?;
        }
        let emb = tape.reshape(emb, vec![active, n, d])?;
        let conv = tape.conv1d(emb, params[Layout::CONV_KERNELS], cfg.kernel_width)?;
        let conv = tape.add_bias(conv, params[Layout::CONV_BIAS])?;
        let conv = tape.tanh(conv)?;
        let windows = cfg.encode.max_chars + 1 - cfg.kernel_width;
        let steps: Vec<usize> = lengths.iter().map(|&l| l.clamp(1, windows)).collect();
        let mut feat = tape.max_over_prefix(conv, &steps)?;

        for l in 0..cfg.highway_layers {
            let base = lay.highway(l);
            let transform = tape.affine(feat, params[base], params[base + 1])?;
            let transform = tape.relu(transform)?;
            let gate = tape.affine(feat, params[base + 2], params[base + 3])?;
            let gate = tape.sigmoid(gate)?;
            // y = t∘H(x) + (1−t)∘x
            let diff = tape.sub(transform, feat)?;
            let gated = tape.mul(gate, diff)?;
            feat = tape.add(feat, gated)?;
        }
        let highway = feat;

        let mut inputs = (0..active).map(|s| tape.row(highway, s)).collect::<diffcore::Result<Vec<_>>>()?;
        for l in 0..cfg.lstm_layers {
            let base = lay.lstm(l);
            let mut hidden = tape.constant(Tensor::zeros(vec![1, h]));
            let mut cell = tape.constant(Tensor::zeros(vec![1, h]));
            let mut outputs = Vec::with_capacity(inputs.len());
            for &x in &inputs {
                let xh = tape.concat_cols(&[x, hidden])?;
                let z = tape.affine(xh, params[base], params[base + 1])?;
                let i = tape.slice_cols(z, 0, h)?;
                let i = tape.sigmoid(i)?;
                let f = tape.slice_cols(z, h, h)?;
                let f = tape.sigmoid(f)?;
                let g = tape.slice_cols(z, 2 * h, h)?;
                let g = tape.tanh(g)?;
                let o = tape.slice_cols(z, 3 * h, h)?;
                let o = tape.sigmoid(o)?;
                let keep = tape.mul(f, cell)?;
                let write = tape.mul(i, g)?;
                cell = tape.add(keep, write)?;
                let squashed = tape.tanh(cell)?;
                hidden = tape.mul(o, squashed)?;
                outputs.push(hidden);
            }
            inputs = outputs;
        }
        let last = *inputs.last().expect("at least one active word");
        let out = lay.output();
        let logits = tape.affine(last, params[out], params[out + 1])?;
        Ok(Graph { logits, onehot, embedded, highway, params, active })
    }

    fn evaluation(tape: &mut Tape, graph: &Graph, label: usize) -> Result<(Var, Evaluation)> {
        let loss = tape.softmax_cross_entropy(graph.logits, label)?;
        let probs = diffcore::softmax(tape.value(graph.logits).data());
        Ok((loss, Evaluation { loss: tape.value(loss).item(), prediction: Prediction::from_probs(probs) }))
    }

    pub fn logits(&self, x: &OneHotText) -> Result<Vec<f64>> {
        let (onehot, lengths) = self.active_onehot(x)?;
        let mut tape = Tape::new();
        let g = self.graph(&mut tape, onehot, &lengths, None, Record { trainable: false, input_grad: false })?;
        Ok(tape.value(g.logits).data().to_vec())
    }

    pub fn predict(&self, x: &OneHotText) -> Result<Prediction> {
        Ok(Prediction::from_probs(diffcore::softmax(&self.logits(x)?)))
    }

    /// Forward pass only.
    pub fn evaluate(&self, x: &OneHotText, label: usize) -> Result<Evaluation> {
        self.evaluate_with_delta(x, label, None)
    }

    /// Forward pass with an additive perturbation of the character
    /// embeddings of the active words.
    pub fn evaluate_with_delta(&self, x: &OneHotText, label: usize, delta: Option<&Tensor>) -> Result<Evaluation> {
        let (onehot, lengths) = self.active_onehot(x)?;
        let mut tape = Tape::new();
        let g = self.graph(&mut tape, onehot, &lengths, delta, Record { trainable: false, input_grad: false })?;
        Ok(Self::evaluation(&mut tape, &g, label)?.1)
    }

    pub fn loss(&self, x: &OneHotText, label: usize) -> Result<f64> {
        Ok(self.evaluate(x, label)?.loss)
    }

    /// Loss at an arbitrary real-valued input tensor of the model's shape.
    /// `lengths` decides which word slots feed the recurrent layer, exactly
    /// as for the one-hot text they came from.
    pub fn loss_dense(&self, x: &Tensor, lengths: &[usize], label: usize) -> Result<f64> {
        let &[m, n, v] = x.shape() else {
            return Err(Error::Contract("dense input must be rank 3".into()));
        };
        self.check_shape([m, n, v])?;
        let active = lengths.iter().rposition(|&l| l > 0).map_or(1, |i| i + 1);
        let onehot = x.data()[..active * n * v].to_vec();
        let mut tape = Tape::new();
        let g = self.graph(&mut tape, onehot, &lengths[..active], None, Record { trainable: false, input_grad: false })?;
        Ok(Self::evaluation(&mut tape, &g, label)?.1.loss)
    }

    /// One forward and one backward pass: the loss and `∂J/∂x` over the
    /// full `m × n × |V|` input. Word slots past the last non-empty word do
    /// not reach the classifier and get zero gradient.
    pub fn input_gradient(&self, x: &OneHotText, label: usize) -> Result<(Evaluation, GradientField)> {
        let probe = self.probe(x, label)?;
        let evaluation = probe.evaluation.clone();
        Ok((evaluation, probe.gradient()?))
    }

    /// Forward pass that keeps its tape so the input gradient can be taken
    /// later, or never.
    pub fn probe(&self, x: &OneHotText, label: usize) -> Result<Probe> {
        let (onehot, lengths) = self.active_onehot(x)?;
        let mut tape = Tape::new();
        let g = self.graph(&mut tape, onehot, &lengths, None, Record { trainable: false, input_grad: true })?;
        let (loss, evaluation) = Self::evaluation(&mut tape, &g, label)?;
        Ok(Probe { tape, loss, onehot: g.onehot, evaluation, shape: x.shape() })
    }

    /// Loss gradient with respect to the character embeddings of the active
    /// words, shape `[active·n, char_dim]`.
    pub fn embedding_gradient(&self, x: &OneHotText, label: usize) -> Result<(Evaluation, Tensor)> {
        let (onehot, lengths) = self.active_onehot(x)?;
        let mut tape = Tape::new();
        let g = self.graph(&mut tape, onehot, &lengths, None, Record { trainable: false, input_grad: true })?;
        let (loss, eval) = Self::evaluation(&mut tape, &g, label)?;
        let mut grads = tape.backward(loss)?;
        Ok((eval, grads.take(g.embedded).expect("embedding output on gradient path")))
    }

    /// Character embeddings of the active words, `[active·n, char_dim]`.
    pub fn embed(&self, x: &OneHotText) -> Result<Tensor> {
        let (onehot, lengths) = self.active_onehot(x)?;
        let mut tape = Tape::new();
        let e = tape.constant(self.params.get(Layout::EMBEDDING).clone());
        let o = tape.constant(Tensor::new(vec![lengths.len() * self.config.encode.max_chars, self.alphabet.len()], onehot)?);
        let out = tape.matmul(o, e)?;
        Ok(tape.value(out).clone())
    }

    /// Highway-layer outputs for a batch of words (symbol indices, no
    /// padding), one row of `kernels` values per word.
    pub fn highway_representations(&self, words: &[Vec<usize>]) -> Result<Vec<Vec<f64>>> {
        let opts = self.config.encode;
        let mut reps = Vec::with_capacity(words.len());
        for chunk in words.chunks(opts.max_words) {
            let x = OneHotText::from_words(chunk, opts.max_words, opts.max_chars, self.alphabet.len())?;
            let (n, v) = (opts.max_chars, self.alphabet.len());
            let mut onehot = vec![0.0; chunk.len() * n * v];
            for i in 0..chunk.len() {
                for j in 0..n {
                    onehot[(i * n + j) * v + x.symbol(i, j)] = 1.0;
                }
            }
            let mut tape = Tape::new();
            let g = self.graph(&mut tape, onehot, &x.lengths()[..chunk.len()], None, Record { trainable: false, input_grad: false })?;
            debug_assert_eq!(g.active, chunk.len());
            let hw = tape.value(g.highway);
            let k = hw.shape()[1];
            reps.extend(hw.data().chunks(k).map(<[f64]>::to_vec));
        }
        Ok(reps)
    }
}

/// A finished forward pass; see [`CharModel::probe`].
pub struct Probe {
    tape: Tape,
    loss: Var,
    onehot: Var,
    pub evaluation: Evaluation,
    shape: [usize; 3],
}

impl Probe {
    /// The backward pass: `∂J/∂x` over the full input, zero past the
    /// active words.
    pub fn gradient(self) -> Result<GradientField> {
        let mut grads = self.tape.backward(self.loss)?;
        let [m, n, v] = self.shape;
        let mut full = grads.take(self.onehot).expect("input leaf requires grad").into_data();
        full.resize(m * n * v, 0.0);
        Ok(GradientField::new(Tensor::new(vec![m, n, v], full)?))
    }
}

impl Trainable for CharModel {
    type Item = CharItem;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn label(item: &CharItem) -> usize {
        item.label
    }

    fn step(&self, item: &CharItem) -> Result<StepResult> {
        let (onehot, lengths) = self.active_onehot(&item.x)?;
        let mut tape = Tape::new();
        let g = self.graph(&mut tape, onehot, &lengths, item.embed_delta.as_ref(), Record { trainable: true, input_grad: false })?;
        let (loss, eval) = Self::evaluation(&mut tape, &g, item.label)?;
        let mut grads = tape.backward(loss)?;
        let param_grads = g
            .params
            .iter()
            .map(|&p| grads.take(p).expect("parameters are trainable").into_data())
            .collect();
        Ok(StepResult { evaluation: eval, param_grads })
    }

    fn predict_item(&self, item: &CharItem) -> Result<Prediction> {
        self.predict(&item.x)
    }
}
