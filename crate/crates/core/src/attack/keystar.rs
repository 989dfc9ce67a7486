use rand::seq::SliceRandom;

use super::edit::{enumerate_edits, EditFilter, EditKind, EditOp, VocabIndex};
use super::{AttackConfig, AttackOutcome};
use crate::corpus::OneHotText;
use crate::models::{CharModel, Evaluation, Prediction};
use crate::rng::{item_stream, Stream};
use crate::Result;

/// Black-box baseline: each step samples `keystar_queries` distinct random
/// flips, queries the loss of each, and keeps a successful one if any
/// (highest loss among them), else the highest-loss one. No gradients.
/// `item` selects the example's random stream so results do not depend on
/// the order examples are attacked in.
pub fn keystar_attack(
    model: &CharModel,
    x: &OneHotText,
    label: usize,
    vocab: &VocabIndex,
    config: &AttackConfig,
    item: u64,
) -> Result<AttackOutcome> {
    config.validate()?;
    let mut rng = item_stream(config.seed, Stream::KeyStar, item);
    let filter = EditFilter { kinds: vec![EditKind::Flip], vocab_constraint: config.vocab_constraint };
    let chars = x.char_count();
    let max_steps = config.max_steps(chars);

    let mut current = x.clone();
    let mut eval = model.evaluate(x, label)?;
    let mut out = AttackOutcome {
        success: false,
        prediction: eval.prediction.clone(),
        edits: vec![],
        step_scores: vec![],
        forward_passes: 1,
        backward_passes: 0,
        steps: 0,
        chars,
        loss_trace: vec![eval.loss],
        peak_wrong_confidence: 0.0,
        final_text: x.clone(),
    };
    let note_wrong = |out: &mut AttackOutcome, p: &Prediction| {
        if p.class != label {
            out.peak_wrong_confidence = out.peak_wrong_confidence.max(p.confidence);
        }
    };
    note_wrong(&mut out, &eval.prediction);

    while !config.is_success(&eval.prediction, label) && out.steps < max_steps {
        let legal = enumerate_edits(&current, vocab, &filter);
        if legal.is_empty() {
            break;
        }
        let sample: Vec<_> = legal.choose_multiple(&mut rng, config.keystar_queries).copied().collect();
        let mut best: Option<((bool, f64), EditOp, OneHotText, Evaluation)> = None;
        for edit in sample {
            let y = edit.apply(&current)?;
            let e = model.evaluate(&y, label)?;
            out.forward_passes += 1;
            let key = (config.is_success(&e.prediction, label), e.loss);
            let better = match &best {
                None => true,
                Some((k, _, _, _)) => key.0 > k.0 || (key.0 == k.0 && key.1 > k.1),
            };
            if better {
                best = Some((key, edit, y, e));
            }
        }
        let (_, edit, y, e) = best.expect("sample is nonempty");
        out.step_scores.push(e.loss - eval.loss);
        out.edits.push(edit);
        out.loss_trace.push(e.loss);
        note_wrong(&mut out, &e.prediction);
        out.steps += 1;
        current = y;
        eval = e;
    }
    out.success = config.is_success(&eval.prediction, label);
    out.prediction = eval.prediction;
    out.final_text = current;
    Ok(out)
}
