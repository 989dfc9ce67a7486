use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate, Trainable};
use crate::rng::{substream, Stream};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Global gradient-norm ceiling applied to each batch gradient.
    pub clip: f64,
    pub max_epochs: usize,
    /// Stop after this many epochs without a dev-accuracy improvement.
    pub patience: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { batch_size: 64, learning_rate: 0.1, clip: 5.0, max_epochs: 25, patience: Some(5), seed: 0 }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || !(self.clip > 0.0) || !(self.learning_rate > 0.0) {
            return Err(Error::Contract(
                "batch size, epoch count, clip threshold and learning rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean loss over the clean items of the epoch.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub dev_accuracy: f64,
}

pub struct TrainOutcome<M> {
    /// Parameters from the epoch with the best dev accuracy.
    pub model: M,
    pub best_epoch: usize,
    pub metrics: Vec<EpochMetrics>,
}

/// Produces extra items for a mini-batch from the current parameters.
pub trait Augment<M: Trainable> {
    fn augment(&mut self, model: &M, batch: &[&M::Item], rng: &mut ChaCha8Rng) -> Result<Vec<M::Item>>;
}

pub struct NoAugment;

impl<M: Trainable> Augment<M> for NoAugment {
    fn augment(&mut self, _: &M, _: &[&M::Item], _: &mut ChaCha8Rng) -> Result<Vec<M::Item>> {
        Ok(Vec::new())
    }
}

/// Rescales `grads` in place so their joint L2 norm is at most `threshold`.
/// Returns the norm before clipping.
pub fn clip_gradients(grads: &mut [Vec<f64>], threshold: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > threshold {
        let factor = threshold / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= factor);
    }
    norm
}

fn diverged(epoch: usize, batch: usize, err: Error) -> Error {
    match err {
        Error::Diff(diffcore::DiffError::NonFinite(message)) => Error::Diverged { epoch, batch, message },
        other => other,
    }
}

/// Mini-batch SGD with gradient clipping. Each batch is the shuffled clean
/// items plus whatever `augment` adds; the update uses their mean gradient.
pub fn train<M: Trainable>(
    mut model: M,
    train_items: &[M::Item],
    dev_items: &[M::Item],
    classes: usize,
    cfg: &TrainConfig,
    augment: &mut dyn Augment<M>,
) -> Result<TrainOutcome<M>> {
    cfg.validate()?;
    if train_items.is_empty() {
        return Err(Error::Degenerate("empty training set".into()));
    }
    let mut rng = substream(cfg.seed, Stream::Train);
    let mut aug_rng = substream(cfg.seed, Stream::Adversarial);
    let mut order: Vec<usize> = (0..train_items.len()).collect();
    let mut metrics = Vec::new();
    let mut best: Option<(f64, usize, M)> = None;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&M::Item> = chunk.iter().map(|&i| &train_items[i]).collect();
            let extra = augment.augment(&model, &batch, &mut aug_rng).map_err(|e| diverged(epoch, b, e))?;
            let mut sum: Vec<Vec<f64>> = model.params().tensors().iter().map(|t| vec![0.0; t.len()]).collect();
            let total = batch.len() + extra.len();
            for (k, item) in batch.iter().copied().chain(extra.iter()).enumerate() {
                let step = model.step(item).map_err(|e| diverged(epoch, b, e))?;
                if !step.evaluation.loss.is_finite() {
                    return Err(Error::Diverged { epoch, batch: b, message: "loss is not finite".into() });
                }
                if k < batch.len() {
                    loss_sum += step.evaluation.loss;
                    correct += usize::from(step.evaluation.prediction.class == M::label(item));
                }
                for (acc, g) in sum.iter_mut().zip(&step.param_grads) {
                    acc.iter_mut().zip(g).for_each(|(a, v)| *a += v);
                }
            }
            let scale = 1.0 / total as f64;
            sum.iter_mut().flatten().for_each(|g| *g *= scale);
            clip_gradients(&mut sum, cfg.clip);
            model.params_mut().sgd_step(&sum, cfg.learning_rate).map_err(|e| diverged(epoch, b, e))?;
        }
        let dev_accuracy = if dev_items.is_empty() { 0.0 } else { evaluate(&model, dev_items, classes)?.accuracy };
        metrics.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / train_items.len() as f64,
            train_accuracy: correct as f64 / train_items.len() as f64,
            dev_accuracy,
        });
        let improved = best.as_ref().map_or(true, |(acc, _, _)| dev_accuracy > *acc);
        if improved {
            best = Some((dev_accuracy, epoch, model.clone()));
        } else if let (Some(p), Some((_, best_epoch, _))) = (cfg.patience, best.as_ref()) {
            if epoch - best_epoch >= p {
                break;
            }
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch when max_epochs > 0");
    Ok(TrainOutcome { model, best_epoch, metrics })
}
