//! Adversarial training and robustness evaluation.

use std::io::Write;

use diffcore::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::{
    attack_dataset, enumerate_edits, keystar_attack, score_edits, AttackConfig, EditFilter, EditKind, Method, VocabIndex,
};
use crate::corpus::{LabeledExample, OneHotText};
use crate::models::{evaluate, train, Augment, CharItem, CharModel, NoAugment, TrainConfig, TrainOutcome};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdvMethod {
    HotflipWhite,
    KeystarBlack,
    EmbedNoise,
    None,
}

impl std::str::FromStr for AdvMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hotflip-white" => Ok(AdvMethod::HotflipWhite),
            "keystar-black" => Ok(AdvMethod::KeystarBlack),
            "embed-noise" => Ok(AdvMethod::EmbedNoise),
            "none" => Ok(AdvMethod::None),
            other => Err(Error::Contract(format!("unknown adversarial training method {other:?}"))),
        }
    }
}

/// How adversarial items join the mini-batches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mixing {
    /// Every batch is its clean items followed by their adversarial copies.
    Concat,
    /// Only every other batch gets adversarial copies.
    Alternate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvTrainConfig {
    pub method: AdvMethod,
    /// Characters changed per training text, as a fraction of its length.
    pub r_train: f64,
    pub noise_scale: f64,
    pub mixing: Mixing,
    /// Restrict training flips by the vocabulary constraint.
    pub vocab_constraint: bool,
    /// Random flips Key* tries per step when generating training copies.
    pub keystar_queries: usize,
}

impl Default for AdvTrainConfig {
    fn default() -> Self {
        Self {
            method: AdvMethod::HotflipWhite,
            r_train: 0.20,
            noise_scale: 0.05,
            mixing: Mixing::Concat,
            vocab_constraint: true,
            keystar_queries: 5,
        }
    }
}

impl AdvTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.r_train) {
            return Err(Error::Contract(format!("r_train {} outside [0, 1]", self.r_train)));
        }
        if !(self.noise_scale >= 0.0) || self.keystar_queries == 0 {
            return Err(Error::Contract("noise scale must be ≥ 0 and Key* queries ≥ 1".into()));
        }
        Ok(())
    }
}

/// Adversarial copies with the passes spent making them.
#[derive(Clone, Debug)]
pub struct AdvBatch {
    pub items: Vec<CharItem>,
    pub forward_passes: usize,
    pub backward_passes: usize,
}

/// One forward and backward pass per text, then its best flip at each of
/// the top ⌈r·chars⌉ positions, all applied at once without re-scoring.
pub fn hotflip_training_examples(model: &CharModel, batch: &[&CharItem], r_train: f64, vocab: &VocabIndex, vocab_constraint: bool) -> Result<AdvBatch> {
    let filter = EditFilter { kinds: vec![EditKind::Flip], vocab_constraint };
    let mut out = AdvBatch { items: Vec::with_capacity(batch.len()), forward_passes: 0, backward_passes: 0 };
    for item in batch {
        let x = &item.x;
        let k = (r_train * x.char_count() as f64 - 1e-9).ceil().max(0.0) as usize;
        if k == 0 {
            out.items.push((*item).clone());
            continue;
        }
        let probe = model.probe(x, item.label)?;
        let grad = probe.gradient()?;
        out.forward_passes += 1;
        out.backward_passes += 1;
        let edits = enumerate_edits(x, vocab, &filter);
        let scored = score_edits(&grad, x, &edits)?;
        // best flip per (word, pos); edits arrive sorted so the first of
        // equal scores is the tie-break winner
        let mut per_slot: Vec<(f64, usize, usize, usize)> = Vec::new();
        for s in scored {
            let e = s.edit;
            match per_slot.last_mut() {
                Some(last) if (last.1, last.2) == (e.word, e.pos) => {
                    if s.normalized > last.0 {
                        *last = (s.normalized, e.word, e.pos, e.symbol);
                    }
                }
                _ => per_slot.push((s.normalized, e.word, e.pos, e.symbol)),
            }
        }
        per_slot.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        let mut words: Vec<Vec<usize>> = (0..x.max_words()).map(|i| x.word(i).to_vec()).collect();
        for &(_, i, j, b) in per_slot.iter().take(k) {
            words[i][j] = b;
        }
        let adv = OneHotText::from_words(&words, x.max_words(), x.max_chars(), x.alphabet_size())?;
        out.items.push(CharItem { x: adv, label: item.label, embed_delta: None });
    }
    Ok(out)
}

/// Per word, the embedding-space step `ε·g/‖g‖_F` with `ε` = `scale` times
/// the Frobenius norm of the word's character embeddings, both taken over
/// its occupied positions. Words with zero gradient are left alone.
pub fn embed_noise_examples(model: &CharModel, batch: &[&CharItem], scale: f64) -> Result<Vec<CharItem>> {
    let n = model.config.encode.max_chars;
    let d = model.config.char_dim;
    batch
        .iter()
        .map(|item| {
            let (_, grad) = model.embedding_gradient(&item.x, item.label)?;
            let emb = model.embed(&item.x)?;
            let active = item.x.active_words();
            let mut delta = vec![0.0; active * n * d];
            for i in 0..active {
                let rows = i * n * d..(i * n + item.x.length(i)) * d;
                let g = &grad.data()[rows.clone()];
                let g_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                if g_norm == 0.0 {
                    continue;
                }
                let e_norm = emb.data()[rows.clone()].iter().map(|v| v * v).sum::<f64>().sqrt();
                let eps = scale * e_norm;
                for (o, gv) in delta[rows].iter_mut().zip(g) {
                    *o = eps * gv / g_norm;
                }
            }
            Ok(CharItem { x: item.x.clone(), label: item.label, embed_delta: Some(Tensor::new(vec![active * n, d], delta)?) })
        })
        .collect()
}

/// Mini-batch augmentation for each adversarial training method.
pub struct AdversarialAugment<'a> {
    pub config: AdvTrainConfig,
    pub vocab: &'a VocabIndex,
    batches: usize,
}

impl<'a> AdversarialAugment<'a> {
    pub fn new(config: AdvTrainConfig, vocab: &'a VocabIndex) -> Self {
        Self { config, vocab, batches: 0 }
    }
}

impl Augment<CharModel> for AdversarialAugment<'_> {
    fn augment(&mut self, model: &CharModel, batch: &[&CharItem], rng: &mut ChaCha8Rng) -> Result<Vec<CharItem>> {
        let turn = self.batches;
        self.batches += 1;
        if self.config.mixing == Mixing::Alternate && turn % 2 == 1 {
            return Ok(Vec::new());
        }
        let cfg = &self.config;
        match cfg.method {
            AdvMethod::None => Ok(Vec::new()),
            AdvMethod::HotflipWhite => {
                Ok(hotflip_training_examples(model, batch, cfg.r_train, self.vocab, cfg.vocab_constraint)?.items)
            }
            AdvMethod::EmbedNoise => embed_noise_examples(model, batch, cfg.noise_scale),
            AdvMethod::KeystarBlack => {
                let attack = AttackConfig {
                    budget: cfg.r_train,
                    tau: 0.0,
                    vocab_constraint: cfg.vocab_constraint,
                    keystar_queries: cfg.keystar_queries,
                    kinds: vec![EditKind::Flip],
                    ..AttackConfig::default()
                };
                batch
                    .iter()
                    .map(|item| {
                        let o = keystar_attack(model, &item.x, item.label, self.vocab, &attack, rng.gen())?;
                        Ok(CharItem { x: o.final_text, label: item.label, embed_delta: None })
                    })
                    .collect()
            }
        }
    }
}

/// [`train`] with each batch augmented per `adv`. With method `None` this
/// is plain training.
pub fn adversarial_train(
    model: CharModel,
    train_items: &[CharItem],
    dev_items: &[CharItem],
    cfg: &TrainConfig,
    adv: &AdvTrainConfig,
    vocab: &VocabIndex,
) -> Result<TrainOutcome<CharModel>> {
    adv.validate()?;
    let classes = model.config.classes;
    if adv.method == AdvMethod::None {
        return train(model, train_items, dev_items, classes, cfg, &mut NoAugment);
    }
    let mut augment = AdversarialAugment::new(adv.clone(), vocab);
    train(model, train_items, dev_items, classes, cfg, &mut augment)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustnessRow {
    pub model: String,
    pub clean_error: f64,
    pub attack_success_rate: Option<f64>,
    pub mean_char_change: Option<f64>,
    pub attack_config_hash: String,
}

/// SHA-256 of the attack configuration's JSON form.
pub fn config_hash(config: &AttackConfig) -> Result<String> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(config)?)))
}

/// Clean error and flip-only beam-attack success for each model, in input
/// order. `full_ops` keeps the configured edit kinds instead.
pub fn robustness_report(
    models: &[(String, &CharModel)],
    test: &[LabeledExample],
    config: &AttackConfig,
    full_ops: bool,
    jobs: usize,
) -> Result<Vec<RobustnessRow>> {
    let mut config = config.clone();
    if !full_ops {
        config.kinds = vec![EditKind::Flip];
    }
    let hash = config_hash(&config)?;
    models
        .iter()
        .map(|(name, model)| {
            let items: Vec<CharItem> = test.iter().map(CharItem::from).collect();
            let clean = evaluate(*model, &items, model.config.classes)?;
            let vocab = VocabIndex::new(&model.vocab, &model.alphabet);
            let report = attack_dataset(model, test, &vocab, Method::Beam, &config, jobs)?;
            Ok(RobustnessRow {
                model: name.clone(),
                clean_error: clean.error(),
                attack_success_rate: report.summary.success_rate,
                mean_char_change: report.summary.mean_char_change,
                attack_config_hash: hash.clone(),
            })
        })
        .collect()
}

pub fn write_robustness_csv<W: Write>(out: W, rows: &[RobustnessRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::Output(e.to_string()))
}
