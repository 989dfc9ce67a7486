use std::io::Write;

use serde::Serialize;

use super::{run_attack, AttackConfig, AttackOutcome, Method, VocabIndex};
use crate::corpus::LabeledExample;
use crate::models::CharModel;
use crate::{Error, Result};

/// One attacked (or skipped) example.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackRecord {
    pub id: usize,
    pub label: usize,
    /// Correctly classified before the attack.
    pub eligible: bool,
    pub outcome: AttackOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttackSummary {
    pub examples: usize,
    pub eligible: usize,
    pub successes: usize,
    /// `None` when no example was eligible.
    pub success_rate: Option<f64>,
    /// Mean characters-changed fraction over successes.
    pub mean_char_change: Option<f64>,
    /// Share of flips, inserts and deletes among all edits of successes.
    pub kind_distribution: Option<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetReport {
    pub records: Vec<AttackRecord>,
    pub summary: AttackSummary,
}

fn attack_one(model: &CharModel, vocab: &VocabIndex, method: Method, config: &AttackConfig, id: usize, ex: &LabeledExample) -> Result<AttackRecord> {
    let eval = model.evaluate(&ex.x, ex.label)?;
    let eligible = eval.prediction.class == ex.label;
    let outcome = if eligible {
        run_attack(model, &ex.x, ex.label, vocab, method, config, id as u64)?
    } else {
        let wrong = eval.prediction.confidence;
        AttackOutcome {
            success: false,
            prediction: eval.prediction,
            edits: vec![],
            step_scores: vec![],
            forward_passes: 1,
            backward_passes: 0,
            steps: 0,
            chars: ex.x.char_count(),
            loss_trace: vec![eval.loss],
            peak_wrong_confidence: wrong,
            final_text: ex.x.clone(),
        }
    };
    Ok(AttackRecord { id, label: ex.label, eligible, outcome })
}

pub fn summarize(records: &[AttackRecord]) -> AttackSummary {
    let eligible = records.iter().filter(|r| r.eligible).count();
    let wins: Vec<&AttackOutcome> = records.iter().filter(|r| r.eligible && r.outcome.success).map(|r| &r.outcome).collect();
    let success_rate = (eligible > 0).then(|| wins.len() as f64 / eligible as f64);
    let mean_char_change = (!wins.is_empty()).then(|| wins.iter().map(|o| o.char_change()).sum::<f64>() / wins.len() as f64);
    let mut counts = [0usize; 3];
    for o in &wins {
        for (c, k) in counts.iter_mut().zip(o.kind_counts()) {
            *c += k;
        }
    }
    let total: usize = counts.iter().sum();
    let kind_distribution = (total > 0).then(|| counts.map(|c| c as f64 / total as f64));
    AttackSummary { examples: records.len(), eligible, successes: wins.len(), success_rate, mean_char_change, kind_distribution }
}

/// Attacks every correctly classified example; misclassified ones are
/// recorded as ineligible and left out of the rates. With `jobs > 1`
/// examples are split across threads; records come back in id order either
/// way.
pub fn attack_dataset(
    model: &CharModel,
    examples: &[LabeledExample],
    vocab: &VocabIndex,
    method: Method,
    config: &AttackConfig,
    jobs: usize,
) -> Result<DatasetReport> {
    config.validate()?;
    let jobs = jobs.clamp(1, examples.len().max(1));
    let records = if jobs == 1 {
        examples
            .iter()
            .enumerate()
            .map(|(id, ex)| attack_one(model, vocab, method, config, id, ex))
            .collect::<Result<Vec<_>>>()?
    } else {
        let mut slots: Vec<Option<AttackRecord>> = vec![None; examples.len()];
        std::thread::scope(|s| -> Result<()> {
            let handles: Vec<_> = (0..jobs)
                .map(|w| {
                    s.spawn(move || {
                        (w..examples.len())
                            .step_by(jobs)
                            .map(|id| attack_one(model, vocab, method, config, id, &examples[id]))
                            .collect::<Result<Vec<_>>>()
                    })
                })
                .collect();
            for h in handles {
                for r in h.join().map_err(|_| Error::Contract("attack worker panicked".into()))?? {
                    let id = r.id;
                    slots[id] = Some(r);
                }
            }
            Ok(())
        })?;
        slots.into_iter().map(|r| r.expect("every id attacked")).collect()
    };
    let summary = summarize(&records);
    Ok(DatasetReport { records, summary })
}

#[derive(Serialize)]
struct Row {
    id: usize,
    eligible: bool,
    success: bool,
    true_label: usize,
    final_label: usize,
    final_confidence: f64,
    num_edits: usize,
    char_change: f64,
    flips: usize,
    inserts: usize,
    deletes: usize,
    forward_queries: usize,
    backward_queries: usize,
}

pub fn write_attack_csv<W: Write>(out: W, records: &[AttackRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        let o = &r.outcome;
        let [flips, inserts, deletes] = o.kind_counts();
        w.serialize(Row {
            id: r.id,
            eligible: r.eligible,
            success: r.eligible && o.success,
            true_label: r.label,
            final_label: o.prediction.class,
            final_confidence: o.prediction.confidence,
            num_edits: o.edits.len(),
            char_change: o.char_change(),
            flips,
            inserts,
            deletes,
            forward_queries: o.forward_passes,
            backward_queries: o.backward_passes,
        })?;
    }
    w.flush().map_err(|e| Error::Output(e.to_string()))
}
