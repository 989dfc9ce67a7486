//! Gradient-guided character edits and the searches built on them.

mod dataset;
mod edit;
mod keystar;
mod score;
mod search;

use serde::{Deserialize, Serialize};

pub use dataset::{attack_dataset, write_attack_csv, AttackRecord, AttackSummary, DatasetReport};
pub use edit::{apply_edit, enumerate_edits, AtomicFlip, EditFilter, EditKind, EditOp, VocabIndex};
pub use keystar::keystar_attack;
pub use score::{best_edit, edit_vector, score_edits, ScoredEdit};
pub use search::{beam_attack, greedy_attack};

use crate::corpus::OneHotText;
use crate::models::{CharModel, Prediction};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Beam,
    Greedy,
    KeyStar,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beam" => Ok(Method::Beam),
            "greedy" => Ok(Method::Greedy),
            "keystar" => Ok(Method::KeyStar),
            other => Err(Error::Contract(format!("unknown attack method {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub beam_width: usize,
    /// Maximum edits as a fraction of the document's non-space characters.
    pub budget: f64,
    pub kinds: Vec<EditKind>,
    /// Success needs the wrong class at probability ≥ tau.
    pub tau: f64,
    pub vocab_constraint: bool,
    /// Seeds the Key* sampler.
    pub seed: u64,
    /// Random flips Key* queries per step.
    pub keystar_queries: usize,
    /// Hard cap on edits on top of the budget.
    pub max_edits: Option<usize>,
    /// Test beam states for success after every step rather than only once
    /// the budget is spent.
    pub check_every_step: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            beam_width: 10,
            budget: 0.10,
            kinds: EditKind::ALL.to_vec(),
            tau: 0.5,
            vocab_constraint: true,
            seed: 0,
            keystar_queries: 20,
            max_edits: None,
            check_every_step: true,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(Error::Contract("beam width must be at least 1".into()));
        }
        if !(self.budget >= 0.0 && self.budget <= 1.0) {
            return Err(Error::Contract(format!("budget {} outside [0, 1]", self.budget)));
        }
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Error::Contract(format!("tau {} outside [0, 1)", self.tau)));
        }
        if self.keystar_queries == 0 {
            return Err(Error::Contract("Key* needs at least one query per step".into()));
        }
        Ok(())
    }

    /// Edit budget for a document of `chars` characters: ⌊budget·chars⌋,
    /// further capped by `max_edits`.
    pub fn max_steps(&self, chars: usize) -> usize {
        let steps = (self.budget * chars as f64 + 1e-9).floor() as usize;
        self.max_edits.map_or(steps, |cap| steps.min(cap))
    }

    pub fn filter(&self) -> EditFilter {
        EditFilter { kinds: self.kinds.clone(), vocab_constraint: self.vocab_constraint }
    }

    pub fn is_success(&self, prediction: &Prediction, label: usize) -> bool {
        prediction.class != label && prediction.confidence >= self.tau
    }
}

/// Parses a comma-separated list such as `flip,insert,delete`.
pub fn parse_kinds(s: &str) -> Result<Vec<EditKind>> {
    let mut kinds = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let kind = EditKind::ALL
            .into_iter()
            .find(|k| k.name() == part)
            .ok_or_else(|| Error::Contract(format!("unknown edit kind {part:?}")))?;
        if !kinds.contains(&kind) {
            kinds.push(kind);
        }
    }
    if kinds.is_empty() {
        return Err(Error::Contract("no edit kinds given".into()));
    }
    kinds.sort();
    Ok(kinds)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackOutcome {
    pub success: bool,
    /// Prediction on the final text.
    pub prediction: Prediction,
    pub edits: Vec<EditOp>,
    /// Per-edit gain: the normalized score at the input it was applied to
    /// (gradient attacks) or the observed loss change (Key*).
    pub step_scores: Vec<f64>,
    pub forward_passes: usize,
    pub backward_passes: usize,
    /// Search depths expanded (gradient rounds for beam search).
    pub steps: usize,
    /// Non-space characters of the original text.
    pub chars: usize,
    /// Loss along the returned path, one entry per text on it.
    pub loss_trace: Vec<f64>,
    /// Highest wrong-class confidence seen along the returned path; 0 if
    /// every text on it was classified correctly.
    pub peak_wrong_confidence: f64,
    pub final_text: OneHotText,
}

impl AttackOutcome {
    pub fn score(&self) -> f64 {
        self.step_scores.iter().sum()
    }

    pub fn char_change(&self) -> f64 {
        if self.chars == 0 {
            0.0
        } else {
            self.edits.len() as f64 / self.chars as f64
        }
    }

    pub fn kind_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for e in &self.edits {
            counts[e.kind as usize] += 1;
        }
        counts
    }
}

/// Runs the chosen attack on one example.
pub fn run_attack(
    model: &CharModel,
    x: &OneHotText,
    label: usize,
    vocab: &VocabIndex,
    method: Method,
    config: &AttackConfig,
    item: u64,
) -> Result<AttackOutcome> {
    match method {
        Method::Beam => beam_attack(model, x, label, vocab, config),
        Method::Greedy => greedy_attack(model, x, label, vocab, config),
        Method::KeyStar => keystar_attack(model, x, label, vocab, config, item),
    }
}
