//! Measurements behind the gradient, scoring and search checks. Each
//! returns what it measured so callers can assert or report.

use std::collections::{HashMap, HashSet};

use diffcore::{Tape, Tensor, Var};
use hotflip::attack::{
    beam_attack, best_edit, edit_vector, enumerate_edits, score_edits, AttackConfig, EditFilter, EditKind, EditOp, VocabIndex,
};
use hotflip::corpus::{LabeledExample, OneHotText};
use hotflip::models::{CharModel, WordModel};
use hotflip::corpus::LabeledText;
use hotflip::wordattack::{WordAttackConfig, WordAttackRecord, WordResources};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-7)
}

fn bumped(t: &Tensor, idx: usize, h: f64) -> Tensor {
    let mut data = t.data().to_vec();
    data[idx] += h;
    Tensor::new(t.shape().to_vec(), data).unwrap()
}

fn char_loss_at(model: &CharModel, x: &OneHotText, t: &Tensor, label: usize) -> f64 {
    model.loss_dense(t, x.lengths(), label).unwrap()
}

/// Central differences at `per_example` random coordinates (within the
/// active words) of each example. Returns `(worst relative error, checked)`.
pub fn char_fd(model: &CharModel, examples: &[LabeledExample], per_example: usize, seed: u64) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut checked) = (0f64, 0);
    for ex in examples {
        let (_, grad) = model.input_gradient(&ex.x, ex.label).unwrap();
        let t = ex.x.to_tensor();
        let [_, n, v] = ex.x.shape();
        for _ in 0..per_example {
            let idx = rng.gen_range(0..ex.x.active_words() * n * v);
            let h = 1e-5;
            let fd = (char_loss_at(model, &ex.x, &bumped(&t, idx, h), ex.label)
                - char_loss_at(model, &ex.x, &bumped(&t, idx, -h), ex.label))
                / (2.0 * h);
            worst = worst.max(rel_err(fd, grad.tensor().data()[idx]));
            checked += 1;
        }
    }
    (worst, checked)
}

pub fn word_fd(model: &WordModel, texts: &[LabeledText], per_example: usize, seed: u64) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut checked) = (0f64, 0);
    for t in texts {
        let ids = model.encode(&t.tokens());
        let (_, grad) = model.input_gradient(&ids, t.label).unwrap();
        let onehot = model.onehot(&ids).unwrap();
        for _ in 0..per_example {
            let idx = rng.gen_range(0..onehot.len());
            let h = 1e-5;
            let fd = (model.loss_dense(&bumped(&onehot, idx, h), t.label).unwrap()
                - model.loss_dense(&bumped(&onehot, idx, -h), t.label).unwrap())
                / (2.0 * h);
            worst = worst.max(rel_err(fd, grad.tensor().data()[idx]));
            checked += 1;
        }
    }
    (worst, checked)
}

type Build = dyn Fn(&mut Tape, &[Var]) -> Var;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn eval(inputs: &[Tensor], build: &Build) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = build(&mut tape, &vars);
    tape.value(loss).item()
}

fn primitive_error(inputs: &[Tensor], build: &Build) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = build(&mut tape, &vars);
    let grads = tape.backward(loss).unwrap();
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        for idx in 0..input.len() {
            let mut plus = inputs.to_vec();
            let mut minus = inputs.to_vec();
            plus[k] = bumped(&input.clone(), idx, h);
            minus[k] = bumped(&input.clone(), idx, -h);
            let numeric = (eval(&plus, build) - eval(&minus, build)) / (2.0 * h);
            let a = grads.get(vars[k]).map_or(0.0, |g| g.data()[idx]);
            worst = worst.max((a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6));
        }
    }
    worst
}

fn weighted(tape: &mut Tape, y: Var) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let w = random_tensor(&mut rng, &tape.value(y).shape().to_vec());
    let w = tape.constant(w);
    let p = tape.mul(y, w).unwrap();
    tape.sum(p).unwrap()
}

/// Worst finite-difference error of each tape primitive on random inputs.
pub fn primitive_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_tensor(&mut rng, &[3, 4]);
    let b = random_tensor(&mut rng, &[3, 4]);
    let m = random_tensor(&mut rng, &[4, 2]);
    let bias = random_tensor(&mut rng, &[4]);
    let bias2 = random_tensor(&mut rng, &[2]);
    let seq = random_tensor(&mut rng, &[2, 5, 3]);
    let kernels = random_tensor(&mut rng, &[2, 3, 4]);
    let logits = random_tensor(&mut rng, &[1, 5]);
    let ab = || vec![a.clone(), b.clone()];
    type Case = (&'static str, Vec<Tensor>, Box<Build>);
    let cases: Vec<Case> = vec![
        ("matmul", vec![a.clone(), m.clone()], Box::new(|t, v| { let y = t.matmul(v[0], v[1]).unwrap(); weighted(t, y) })),
        ("affine", vec![a.clone(), m.clone(), bias2], Box::new(|t, v| { let y = t.affine(v[0], v[1], v[2]).unwrap(); weighted(t, y) })),
        ("add_bias", vec![a.clone(), bias], Box::new(|t, v| { let y = t.add_bias(v[0], v[1]).unwrap(); weighted(t, y) })),
        ("add", ab(), Box::new(|t, v| { let y = t.add(v[0], v[1]).unwrap(); weighted(t, y) })),
        ("sub", ab(), Box::new(|t, v| { let y = t.sub(v[0], v[1]).unwrap(); weighted(t, y) })),
        ("mul", ab(), Box::new(|t, v| { let y = t.mul(v[0], v[1]).unwrap(); weighted(t, y) })),
        ("scale", ab(), Box::new(|t, v| { let y = t.scale(v[0], -2.5).unwrap(); weighted(t, y) })),
        ("tanh", ab(), Box::new(|t, v| { let y = t.tanh(v[0]).unwrap(); weighted(t, y) })),
        ("sigmoid", ab(), Box::new(|t, v| { let y = t.sigmoid(v[0]).unwrap(); weighted(t, y) })),
        ("relu", ab(), Box::new(|t, v| { let y = t.relu(v[0]).unwrap(); weighted(t, y) })),
        ("conv1d", vec![seq.clone(), kernels], Box::new(|t, v| { let y = t.conv1d(v[0], v[1], 2).unwrap(); weighted(t, y) })),
        ("max_over_time", ab(), Box::new(|t, v| { let y = t.max_over_time(v[0]).unwrap(); weighted(t, y) })),
        ("max_over_prefix", vec![seq], Box::new(|t, v| { let y = t.max_over_prefix(v[0], &[2, 5]).unwrap(); weighted(t, y) })),
        ("concat_cols", ab(), Box::new(|t, v| { let y = t.concat_cols(&[v[0], v[1]]).unwrap(); weighted(t, y) })),
        ("slice_cols", ab(), Box::new(|t, v| { let y = t.slice_cols(v[0], 1, 2).unwrap(); weighted(t, y) })),
        ("row", ab(), Box::new(|t, v| { let y = t.row(v[1], 2).unwrap(); weighted(t, y) })),
        ("reshape", ab(), Box::new(|t, v| { let y = t.reshape(v[0], vec![2, 6]).unwrap(); weighted(t, y) })),
        ("softmax_cross_entropy", vec![logits], Box::new(|t, v| t.softmax_cross_entropy(v[0], 3).unwrap())),
    ];
    cases.iter().map(|(name, inputs, build)| (*name, primitive_error(inputs, build.as_ref()))).collect()
}

/// |(J(x + εv̂) − J(x))/ε − score| for each ε.
fn directional_errors(model: &CharModel, x: &OneHotText, label: usize, edit: &EditOp, score: f64, eps: &[f64]) -> Vec<f64> {
    let v = edit_vector(x, edit).unwrap();
    let norm = v.data().iter().map(|a| a * a).sum::<f64>().sqrt();
    let base = x.to_tensor();
    let j0 = char_loss_at(model, x, &base, label);
    eps.iter()
        .map(|&e| {
            let moved: Vec<f64> = base.data().iter().zip(v.data()).map(|(b, d)| b + e * d / norm).collect();
            let jt = char_loss_at(model, x, &Tensor::new(base.shape().to_vec(), moved).unwrap(), label);
            ((jt - j0) / e - score).abs()
        })
        .collect()
}

/// For each edit kind, samples edits and checks that the error between the
/// ε-interpolated loss ratio and the normalized score strictly falls over
/// ε ∈ {1e-2, 1e-3, 1e-4}. Returns `(kind, tested, failures)`.
pub fn directional(model: &CharModel, examples: &[LabeledExample], seed: u64) -> Vec<(EditKind, usize, Vec<String>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = [1e-2, 1e-3, 1e-4];
    EditKind::ALL
        .into_iter()
        .map(|kind| {
            let filter = EditFilter { kinds: vec![kind], vocab_constraint: false };
            let (mut tested, mut failures) = (0, Vec::new());
            for ex in examples {
                let (_, grad) = model.input_gradient(&ex.x, ex.label).unwrap();
                let all = enumerate_edits(&ex.x, &VocabIndex::empty(), &filter);
                let edits: Vec<EditOp> = all.choose_multiple(&mut rng, 4).copied().collect();
                for s in score_edits(&grad, &ex.x, &edits).unwrap() {
                    let errs = directional_errors(model, &ex.x, ex.label, &s.edit, s.normalized, &eps);
                    if !(errs[0] > errs[1] && errs[1] > errs[2]) {
                        failures.push(format!("{:?}: errors {errs:?}", s.edit));
                    }
                    tested += 1;
                }
            }
            (kind, tested, failures)
        })
        .collect()
}

/// Sparse scores against dense ∇J·v for `count` random edits of every kind.
/// Returns `(worst absolute difference, compared)`, covering both the raw
/// and the normalized score.
pub fn sparse_vs_dense(model: &CharModel, examples: &[LabeledExample], count: usize, seed: u64) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let filter = EditFilter { kinds: EditKind::ALL.to_vec(), vocab_constraint: false };
    let (mut worst, mut compared) = (0f64, 0);
    for ex in examples.iter().cycle() {
        if compared >= count {
            break;
        }
        let (_, grad) = model.input_gradient(&ex.x, ex.label).unwrap();
        let all = enumerate_edits(&ex.x, &VocabIndex::empty(), &filter);
        let edits: Vec<EditOp> = all.choose_multiple(&mut rng, 100.min(count - compared)).copied().collect();
        for s in score_edits(&grad, &ex.x, &edits).unwrap() {
            let v = edit_vector(&ex.x, &s.edit).unwrap();
            let dense: f64 = grad.tensor().data().iter().zip(v.data()).map(|(g, d)| g * d).sum();
            let norm = v.data().iter().map(|a| a * a).sum::<f64>().sqrt();
            worst = worst.max((s.raw - dense).abs()).max((s.normalized - dense / norm).abs());
            compared += 1;
        }
    }
    (worst, compared)
}

/// One-step beams at least as wide as the candidate set must return
/// `best_edit`'s choice. Returns the texts where they disagree.
pub fn beam_oracle(model: &CharModel, texts: &[&str]) -> Vec<String> {
    let vocab = VocabIndex::new(&model.vocab, &model.alphabet);
    let filter = EditFilter { kinds: EditKind::ALL.to_vec(), vocab_constraint: true };
    let mut out = Vec::new();
    for text in texts {
        let x = OneHotText::encode(text, &model.alphabet, &model.config.encode).unwrap();
        let legal = enumerate_edits(&x, &vocab, &filter);
        let label = model.predict(&x).unwrap().class;
        for width in [legal.len(), legal.len() + 5] {
            let config = AttackConfig { beam_width: width, budget: 1.0, max_edits: Some(1), tau: 0.99, ..Default::default() };
            let run = beam_attack(model, &x, label, &vocab, &config).unwrap();
            let (_, grad) = model.input_gradient(&x, label).unwrap();
            let best = best_edit(&grad, &x, &vocab, &filter).unwrap();
            if run.edits != vec![best.edit] || run.backward_passes != 1 {
                out.push(format!("{text} (width {width}): beam {:?}, best {:?}", run.edits, best.edit));
            }
        }
    }
    out
}

/// Beam runs whose counters break backward ≤ b×steps or
/// forward ≤ b×(steps+1).
pub fn counter_violations(model: &CharModel, examples: &[LabeledExample], widths: &[usize]) -> (Vec<String>, usize) {
    let vocab = VocabIndex::new(&model.vocab, &model.alphabet);
    let (mut out, mut runs) = (Vec::new(), 0);
    for &width in widths {
        let config = AttackConfig { beam_width: width, budget: 0.2, ..Default::default() };
        for (i, ex) in examples.iter().enumerate() {
            let r = beam_attack(model, &ex.x, ex.label, &vocab, &config).unwrap();
            if r.backward_passes > width * r.steps || r.forward_passes > width * (r.steps + 1) {
                out.push(format!("example {i} width {width}: {} forward, {} backward, {} steps", r.forward_passes, r.backward_passes, r.steps));
            }
            runs += 1;
        }
    }
    (out, runs)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Two words are taken as one lexeme if stripping a common inflection
/// from either side makes them equal.
pub fn same_lexeme(a: &str, b: &str) -> bool {
    const ENDINGS: &[&str] = &["", "s", "es", "ed", "d", "ing", "ly", "er", "est"];
    let bases = |w: &str| -> Vec<String> {
        ENDINGS.iter().filter_map(|e| w.strip_suffix(e)).filter(|s| !s.is_empty()).map(str::to_string).collect()
    };
    let (x, y) = (bases(a), bases(b));
    x.iter().any(|s| y.contains(s))
}

/// Rechecks every emitted substitution against the raw embedding table and
/// tag lexicon, and replays the final sentence. Returns
/// `(substitutions checked, violations)`.
pub fn word_attack_violations(
    model: &WordModel,
    test: &[(Vec<usize>, usize)],
    records: &[WordAttackRecord],
    res: &WordResources,
    config: &WordAttackConfig,
    table: &HashMap<String, Vec<f64>>,
    tags: &HashMap<String, String>,
) -> (usize, Vec<String>) {
    let (mut checked, mut bad) = (0, Vec::new());
    for r in records {
        let Some(o) = &r.outcome else { continue };
        let (ids, label) = &test[r.id];
        let positions: HashSet<usize> = o.substitutions.iter().map(|s| s.position).collect();
        if o.substitutions.len() > config.max_flips || positions.len() != o.substitutions.len() {
            bad.push(format!("example {}: {} substitutions at {positions:?}", r.id, o.substitutions.len()));
        }
        let mut replayed = ids.clone();
        for s in &o.substitutions {
            let pair = format!("example {}: {} → {}", r.id, s.from, s.to);
            if model.index.word(ids[s.position]) != s.from {
                bad.push(format!("{pair}: source is not the word at {}", s.position));
            }
            replayed[s.position] = model.index.id(&s.to);
            match (table.get(&s.from), table.get(&s.to)) {
                (Some(a), Some(b)) if cosine(a, b) > config.constraints.threshold => {}
                _ => bad.push(format!("{pair}: cosine")),
            }
            let (pa, pb) = (tags.get(&s.from), tags.get(&s.to));
            if pa.is_none() || pa != pb {
                bad.push(format!("{pair}: tags {pa:?} {pb:?}"));
            }
            if res.stopwords.contains(&s.from) || res.stopwords.contains(&s.to) {
                bad.push(format!("{pair}: stop word"));
            }
            if same_lexeme(&s.from, &s.to) {
                bad.push(format!("{pair}: same lexeme"));
            }
            checked += 1;
        }
        if replayed != o.final_ids {
            bad.push(format!("example {}: final ids do not replay", r.id));
        }
        if o.success != (model.predict(&o.final_ids).unwrap().class != *label) {
            bad.push(format!("example {}: success flag disagrees with prediction", r.id));
        }
    }
    (checked, bad)
}
