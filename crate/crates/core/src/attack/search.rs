use std::cmp::Ordering;
use std::collections::HashSet;

use super::edit::{enumerate_edits, EditOp, VocabIndex};
use super::score::{score_edits, ScoredEdit};
use super::{AttackConfig, AttackOutcome};
use crate::corpus::OneHotText;
use crate::models::{CharModel, Evaluation};
use crate::Result;

/// One beam entry: the edits applied so far and their summed scores.
#[derive(Clone, Debug)]
struct Node {
    x: OneHotText,
    edits: Vec<EditOp>,
    step_scores: Vec<f64>,
    score: f64,
    losses: Vec<f64>,
    peak_wrong: f64,
}

struct Candidate {
    total: f64,
    scored: ScoredEdit,
    parent: usize,
}

fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.total
        .total_cmp(&a.total)
        .then_with(|| a.scored.edit.cmp(&b.scored.edit))
        .then_with(|| a.parent.cmp(&b.parent))
}

struct Counters {
    forward: usize,
    backward: usize,
    steps: usize,
}

fn finish(node: Node, eval: Evaluation, success: bool, counters: &Counters, chars: usize) -> AttackOutcome {
    AttackOutcome {
        success,
        prediction: eval.prediction,
        edits: node.edits,
        step_scores: node.step_scores,
        forward_passes: counters.forward,
        backward_passes: counters.backward,
        steps: counters.steps,
        chars,
        loss_trace: node.losses,
        peak_wrong_confidence: node.peak_wrong,
        final_text: node.x,
    }
}

/// Index of the highest-scoring entry among `indices` (first wins ties).
fn best_of(nodes: &[(Node, Evaluation)], indices: impl Iterator<Item = usize>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for k in indices {
        if best.map_or(true, |b| nodes[k].0.score > nodes[b].0.score) {
            best = Some(k);
        }
    }
    best
}

/// Beam search over edit sequences.
///
/// Each round evaluates every beam state with one forward pass; if any is a
/// success the best-scoring success is returned. Otherwise each state gets
/// one backward pass, all its legal edits are scored from that single
/// gradient, and the `beam_width` best successors by cumulative score
/// (distinct texts not seen before) form the next beam. The search ends
/// when the edit budget is spent or no successor remains, returning the
/// best-scoring state as a failure.
pub fn beam_attack(model: &CharModel, x: &OneHotText, label: usize, vocab: &VocabIndex, config: &AttackConfig) -> Result<AttackOutcome> {
    config.validate()?;
    let filter = config.filter();
    let chars = x.char_count();
    let max_steps = config.max_steps(chars);
    let mut counters = Counters { forward: 0, backward: 0, steps: 0 };
    let mut visited: HashSet<OneHotText> = HashSet::from([x.clone()]);
    let mut beam = vec![Node { x: x.clone(), edits: vec![], step_scores: vec![], score: 0.0, losses: vec![], peak_wrong: 0.0 }];

    loop {
        let expand = counters.steps < max_steps;
        let mut probes = Vec::with_capacity(beam.len());
        let mut evaluated = Vec::with_capacity(beam.len());
        for mut node in beam {
            let probe = model.probe(&node.x, label)?;
            counters.forward += 1;
            let eval = probe.evaluation.clone();
            node.losses.push(eval.loss);
            if eval.prediction.class != label {
                node.peak_wrong = node.peak_wrong.max(eval.prediction.confidence);
            }
            probes.push(probe);
            evaluated.push((node, eval));
        }

        if config.check_every_step || !expand {
            let successes = (0..evaluated.len()).filter(|&k| config.is_success(&evaluated[k].1.prediction, label));
            if let Some(k) = best_of(&evaluated, successes) {
                let (node, eval) = evaluated.swap_remove(k);
                return Ok(finish(node, eval, true, &counters, chars));
            }
        }
        let fail = |mut evaluated: Vec<(Node, Evaluation)>, counters: &Counters| {
            let k = best_of(&evaluated, 0..evaluated.len()).expect("beam is never empty");
            let (node, eval) = evaluated.swap_remove(k);
            Ok(finish(node, eval, false, counters, chars))
        };
        if !expand {
            return fail(evaluated, &counters);
        }

        let mut candidates = Vec::new();
        for (k, probe) in probes.into_iter().enumerate() {
            let grad = probe.gradient()?;
            counters.backward += 1;
            let node = &evaluated[k].0;
            let edits = enumerate_edits(&node.x, vocab, &filter);
            for scored in score_edits(&grad, &node.x, &edits)? {
                candidates.push(Candidate { total: node.score + scored.normalized, scored, parent: k });
            }
        }
        counters.steps += 1;
        candidates.sort_by(rank);

        let mut next = Vec::with_capacity(config.beam_width);
        for c in candidates {
            if next.len() == config.beam_width {
                break;
            }
            let parent = &evaluated[c.parent].0;
            let y = c.scored.edit.apply(&parent.x)?;
            if !visited.insert(y.clone()) {
                continue;
            }
            let mut child = parent.clone();
            child.x = y;
            child.edits.push(c.scored.edit);
            child.step_scores.push(c.scored.normalized);
            child.score = c.total;
            next.push(child);
        }
        if next.is_empty() {
            return fail(evaluated, &counters);
        }
        beam = next;
    }
}

/// Beam search with a single state.
pub fn greedy_attack(model: &CharModel, x: &OneHotText, label: usize, vocab: &VocabIndex, config: &AttackConfig) -> Result<AttackOutcome> {
    beam_attack(model, x, label, vocab, &AttackConfig { beam_width: 1, ..config.clone() })
}
