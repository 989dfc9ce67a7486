#![allow(dead_code)]

pub mod oracles;
pub mod pipeline;

use hotflip::analysis::{nearest_neighbors, NeighborIndex};
use hotflip::attack::{enumerate_edits, score_edits, EditFilter, EditKind, EditOp, VocabIndex};
use hotflip::corpus::{build_alphabet, build_word_vocab, encode_examples, Alphabet, EncodeOptions, LabeledExample, LabeledText, OneHotText};
use hotflip::models::{train, CharItem, CharModel, CharModelConfig, NoAugment, TrainConfig, WordIndex, WordItem, WordModel, WordModelConfig};
use hotflip::synth;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use hotflip::wordattack::{Embeddings, WordResources};

pub const TINY_OPTS: EncodeOptions = EncodeOptions { max_words: 8, max_chars: 10, lowercase: true };

pub fn tiny_config() -> CharModelConfig {
    CharModelConfig {
        encode: TINY_OPTS,
        char_dim: 6,
        kernel_width: 3,
        kernels: 12,
        highway_layers: 1,
        hidden: 10,
        lstm_layers: 1,
        classes: 4,
    }
}

pub fn tiny_texts(count: usize, seed: u64) -> Vec<LabeledText> {
    synth::news_corpus(count, seed)
}

/// Untrained tiny character model plus encoded examples sharing its alphabet.
pub fn tiny_char(count: usize, seed: u64) -> (CharModel, Vec<LabeledExample>) {
    let texts = tiny_texts(count, seed);
    let alphabet = build_alphabet(texts.iter().map(|t| t.text.as_str()), &TINY_OPTS).unwrap();
    let vocab = build_word_vocab(texts.iter().map(|t| t.text.as_str()), &TINY_OPTS).unwrap();
    let examples = encode_examples(&texts, &alphabet, &TINY_OPTS).unwrap();
    (CharModel::new(tiny_config(), alphabet, vocab, seed).unwrap(), examples)
}

pub const SMALL_OPTS: EncodeOptions = EncodeOptions { max_words: 12, max_chars: 12, lowercase: true };

/// Small character model trained on 4,000 synthetic news texts (about 80%
/// dev accuracy); returns 400 held-out examples.
pub fn trained_tiny_char(seed: u64) -> (CharModel, Vec<LabeledExample>) {
    let texts = tiny_texts(4400, seed);
    let alphabet = build_alphabet(texts.iter().map(|t| t.text.as_str()), &SMALL_OPTS).unwrap();
    let vocab = build_word_vocab(texts.iter().map(|t| t.text.as_str()), &SMALL_OPTS).unwrap();
    let examples = encode_examples(&texts, &alphabet, &SMALL_OPTS).unwrap();
    let config = CharModelConfig { encode: SMALL_OPTS, char_dim: 8, kernels: 24, hidden: 16, ..tiny_config() };
    let model = CharModel::new(config, alphabet, vocab, seed).unwrap();
    let (train_ex, test_ex) = examples.split_at(4000);
    let items: Vec<CharItem> = train_ex.iter().map(CharItem::from).collect();
    let dev: Vec<CharItem> = test_ex[..100].iter().map(CharItem::from).collect();
    let cfg = TrainConfig { batch_size: 16, learning_rate: 0.5, clip: 5.0, max_epochs: 10, patience: None, seed };
    let out = train(model, &items, &dev, 4, &cfg, &mut NoAugment).unwrap();
    (out.model, test_ex.to_vec())
}

pub fn tiny_word(seed: u64) -> (WordModel, Vec<LabeledText>) {
    let texts = synth::sentiment_corpus(60, seed);
    let index = WordIndex::new(texts.iter().flat_map(|t| t.tokens()).map(str::to_string));
    let config = WordModelConfig { dim: 8, widths: vec![2, 3], kernels: 5, classes: 2 };
    (WordModel::new(config, index, None, seed).unwrap(), texts)
}

/// Synthetic sentiment resources: cluster-structured vectors, the POS
/// lexicon and the shipped stop words.
pub fn sentiment_resources(dim: usize, seed: u64) -> WordResources {
    let table = synth::sentiment_embeddings(dim, seed).into_iter().collect();
    WordResources {
        embeddings: Embeddings { dim, table },
        pos: synth::sentiment_lexicon().into_iter().collect(),
        stopwords: Default::default(),
    }
}

/// Word model trained on `count` synthetic reviews (the first 80%); returns
/// the encoded remainder as `(ids, label)` pairs.
pub fn trained_sentiment(count: usize, seed: u64, resources: &WordResources) -> (WordModel, Vec<(Vec<usize>, usize)>) {
    let texts = synth::sentiment_corpus(count, seed);
    let (train_texts, test_texts) = texts.split_at(count * 4 / 5);
    let index = WordIndex::new(train_texts.iter().flat_map(|t| t.tokens()).map(str::to_string));
    let config = WordModelConfig { dim: resources.embeddings.dim, widths: vec![2, 3], kernels: 10, classes: 2 };
    let model = WordModel::new(config, index, Some(&resources.embeddings.table), seed).unwrap();
    let items: Vec<WordItem> = train_texts.iter().map(|t| WordItem { ids: model.encode(&t.tokens()), label: t.label }).collect();
    let cfg = TrainConfig { batch_size: 16, learning_rate: 0.1, clip: 5.0, max_epochs: 3, patience: None, seed };
    let out = train(model, &items, &items[..50], 2, &cfg, &mut NoAugment).unwrap();
    let test = test_texts.iter().map(|t| (out.model.encode(&t.tokens()), t.label)).collect();
    (out.model, test)
}

/// The string-level effect of `edit` on `words`.
fn edit_strings(words: &mut [Vec<char>], edit: &EditOp, alphabet: &Alphabet) {
    let w = &mut words[edit.word];
    match edit.kind {
        EditKind::Flip => w[edit.pos] = alphabet.char_at(edit.symbol).unwrap(),
        EditKind::Insert => w.insert(edit.pos, alphabet.char_at(edit.symbol).unwrap()),
        EditKind::Delete => {
            w.remove(edit.pos);
        }
    }
}

/// One-hot problems of `x`: non-one-hot slots, symbols after padding, a
/// tensor round trip that changes it, a string mismatch with `expected`,
/// or a decode/re-encode that does not reproduce it.
pub fn onehot_violations(x: &OneHotText, expected: &[Vec<char>], alphabet: &Alphabet, opts: &EncodeOptions) -> Vec<String> {
    let mut out = Vec::new();
    let t = x.to_tensor();
    let [m, n, v] = x.shape();
    for slot in 0..m * n {
        let row = &t.data()[slot * v..(slot + 1) * v];
        let ones = row.iter().filter(|&&a| a == 1.0).count();
        let zeros = row.iter().filter(|&&a| a == 0.0).count();
        if ones != 1 || zeros != v - 1 {
            out.push(format!("slot {slot} is not one-hot"));
        }
    }
    match OneHotText::from_tensor(&t) {
        Ok(back) if &back == x => {}
        Ok(_) => out.push("tensor round trip changed the text".into()),
        Err(e) => out.push(format!("tensor round trip failed: {e}")),
    }
    let decoded: Vec<String> = (0..m).map(|i| x.word_string(i, alphabet)).filter(|w| !w.is_empty()).collect();
    let wanted: Vec<String> = expected.iter().map(|w| w.iter().collect::<String>()).filter(|w| !w.is_empty()).collect();
    if decoded != wanted {
        out.push(format!("decoded {decoded:?}, string edits give {wanted:?}"));
    }
    match OneHotText::encode(&x.decode(alphabet), alphabet, opts) {
        Ok(again) if &again == x => {}
        Ok(_) => out.push("decode then encode changed the text".into()),
        Err(e) => out.push(format!("re-encode failed: {e}")),
    }
    out
}

/// Applies `count` random legal edits in walks of up to 25 edits per
/// document, checking every result. Returns the violations found.
pub fn onehot_fuzz(count: usize, seed: u64) -> Vec<String> {
    let texts = tiny_texts(200, seed);
    let alphabet = build_alphabet(texts.iter().map(|t| t.text.as_str()), &TINY_OPTS).unwrap();
    let examples = encode_examples(&texts, &alphabet, &TINY_OPTS).unwrap();
    let filter = EditFilter { kinds: EditKind::ALL.to_vec(), vocab_constraint: false };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = Vec::new();
    let mut applied = 0;
    for ex in examples.iter().cycle() {
        let mut x = ex.x.clone();
        let mut words: Vec<Vec<char>> = (0..x.max_words()).map(|i| x.word_string(i, &alphabet).chars().collect()).collect();
        for _ in 0..25 {
            if applied == count {
                return violations;
            }
            let legal = enumerate_edits(&x, &VocabIndex::empty(), &filter);
            let Some(edit) = legal.choose(&mut rng) else { break };
            let before = x.clone();
            x = match edit.apply(&x) {
                Ok(y) => y,
                Err(e) => {
                    violations.push(format!("{edit:?}: {e}"));
                    break;
                }
            };
            edit_strings(&mut words, edit, &alphabet);
            for i in (0..x.max_words()).filter(|&i| i != edit.word) {
                if x.word(i) != before.word(i) {
                    violations.push(format!("{edit:?} touched word {i}"));
                }
            }
            violations.extend(onehot_violations(&x, &words, &alphabet, &TINY_OPTS).into_iter().map(|v| format!("{edit:?}: {v}")));
            applied += 1;
        }
    }
    unreachable!("examples cycle forever")
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let (na, nb) = (a.iter().map(|x| x * x).sum::<f64>().sqrt(), b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// `count` random queries: vocabulary words, half of them with one
/// character replaced.
pub fn neighbor_queries(model: &CharModel, index: &NeighborIndex, count: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let symbols = model.alphabet.symbols();
    (0..count)
        .map(|q| {
            let mut w: Vec<char> = index.words.choose(&mut rng).unwrap().chars().collect();
            if q % 2 == 1 {
                let j = rng.gen_range(0..w.len());
                w[j] = *symbols.choose(&mut rng).unwrap();
            }
            w.into_iter().collect()
        })
        .collect()
}

/// Compares `nearest_neighbors` with a full ranking of every indexed word,
/// each embedded on its own. Returns the mismatches.
pub fn neighbor_mismatches(model: &CharModel, index: &NeighborIndex, queries: &[String], k: usize) -> Vec<String> {
    let embed = |w: &str| -> Vec<f64> {
        let s: Vec<usize> = w.chars().map(|c| model.alphabet.index_of(c).unwrap()).collect();
        model.highway_representations(&[s]).unwrap().remove(0)
    };
    let reps: Vec<(String, Vec<f64>)> = index.words.iter().map(|w| (w.clone(), embed(w))).collect();
    let mut out = Vec::new();
    for q in queries {
        let qv = embed(q);
        let mut all: Vec<(String, f64)> = reps.iter().filter(|(w, _)| w != q).map(|(w, r)| (w.clone(), cosine(&qv, r))).collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        all.truncate(k);
        let got = nearest_neighbors(model, index, q, k).unwrap();
        let words: Vec<&String> = got.neighbors.iter().map(|(w, _)| w).collect();
        let expected: Vec<&String> = all.iter().map(|(w, _)| w).collect();
        if words != expected {
            out.push(format!("{q}: got {words:?}, brute force {expected:?}"));
        } else if got.neighbors.iter().zip(&all).any(|(a, b)| (a.1 - b.1).abs() > 1e-12) {
            out.push(format!("{q}: cosines differ"));
        }
    }
    out
}

/// Over the first `count` correctly classified examples, how often the flip
/// with the highest true loss (every legal flip evaluated) is among the
/// five best by normalized surrogate score. Returns `(hits, examined)`.
pub fn surrogate_top5(model: &CharModel, examples: &[LabeledExample], count: usize) -> (usize, usize) {
    let vocab = VocabIndex::new(&model.vocab, &model.alphabet);
    let filter = EditFilter { kinds: vec![EditKind::Flip], vocab_constraint: true };
    let (mut hits, mut examined) = (0, 0);
    for ex in examples {
        if examined == count {
            break;
        }
        if model.predict(&ex.x).unwrap().class != ex.label {
            continue;
        }
        let flips = enumerate_edits(&ex.x, &vocab, &filter);
        let mut best: Option<(f64, EditOp)> = None;
        for e in &flips {
            let loss = model.loss(&e.apply(&ex.x).unwrap(), ex.label).unwrap();
            if best.map_or(true, |(l, _)| loss > l) {
                best = Some((loss, *e));
            }
        }
        let (_, grad) = model.input_gradient(&ex.x, ex.label).unwrap();
        let mut scored = score_edits(&grad, &ex.x, &flips).unwrap();
        scored.sort_by(|a, b| b.normalized.total_cmp(&a.normalized));
        let target = best.unwrap().1;
        if scored.iter().take(5).any(|s| s.edit == target) {
            hits += 1;
        }
        examined += 1;
    }
    (hits, examined)
}
