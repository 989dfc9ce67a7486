//! Dataset ingestion and the one-hot text representation.

mod alphabet;
mod onehot;

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;

pub use alphabet::{build_alphabet, build_word_vocab, Alphabet, EncodeOptions, WordVocab, PAD};
pub use onehot::OneHotText;

use crate::rng::{substream, Stream};
use crate::{Error, Result};

/// Raw labeled text as read from disk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledText {
    pub text: String,
    pub label: usize,
}

/// Encoded example: the one-hot text, its class and the normalized text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledExample {
    pub x: OneHotText,
    pub label: usize,
    pub text: String,
}

pub const AGNEWS_CLASSES: [&str; 4] = ["World", "Sports", "Business", "Sci/Tech"];

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

/// Reads the three-column AG-news CSV (`class,title,description`, class
/// 1–4). Text is `title + " " + description`; labels become 0–3.
pub fn load_agnews(path: &Path, lowercase: bool) -> Result<Vec<LabeledText>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(open(path)?);
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 3 {
            return Err(Error::parse(path, line, format!("expected 3 fields, found {}", record.len())));
        }
        let class: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, line, format!("class {:?} is not an integer", &record[0])))?;
        if !(1..=4).contains(&class) {
            return Err(Error::parse(path, line, format!("class {class} outside 1-4")));
        }
        let text = format!("{} {}", record[1].trim(), record[2].trim());
        let text = if lowercase { text.to_lowercase() } else { text };
        out.push(LabeledText { text, label: class - 1 });
    }
    Ok(out)
}

/// Result of reading a binary sentiment file.
#[derive(Clone, Debug, Default)]
pub struct SstLoad {
    pub examples: Vec<LabeledText>,
    /// Blank lines skipped.
    pub skipped: usize,
}

impl LabeledText {
    pub fn tokens(&self) -> Vec<&str> {
        self.text.split_whitespace().collect()
    }
}

/// Reads `label<TAB>sentence` lines with labels 0 (negative) and 1
/// (positive). Sentences are whitespace-tokenized and re-joined with
/// single spaces.
pub fn load_sst_binary(path: &Path, lowercase: bool) -> Result<SstLoad> {
    let reader = BufReader::new(open(path)?);
    let mut load = SstLoad::default();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            load.skipped += 1;
            continue;
        }
        let (label, sentence) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, n + 1, "missing tab between label and sentence"))?;
        let label = match label.trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(Error::parse(path, n + 1, format!("label {other:?} not in {{0,1}}"))),
        };
        let text = sentence.split_whitespace().collect::<Vec<_>>().join(" ");
        let text = if lowercase { text.to_lowercase() } else { text };
        load.examples.push(LabeledText { text, label });
    }
    Ok(load)
}

pub fn encode_examples(texts: &[LabeledText], alphabet: &Alphabet, opts: &EncodeOptions) -> Result<Vec<LabeledExample>> {
    texts
        .iter()
        .map(|t| {
            Ok(LabeledExample {
                x: OneHotText::encode(&t.text, alphabet, opts)?,
                label: t.label,
                text: opts.normalize(&t.text),
            })
        })
        .collect()
}

/// Deterministic disjoint split; `fraction` of the items go to the second
/// (development) half. Both halves keep input order.
pub fn dev_split<T: Clone>(items: &[T], fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Contract(format!("dev fraction {fraction} must lie in (0, 1)")));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut substream(seed, Stream::Split));
    let n_dev = (items.len() as f64 * fraction).round() as usize;
    let mut is_dev = vec![false; items.len()];
    for &i in &order[..n_dev] {
        is_dev[i] = true;
    }
    let (mut train, mut dev) = (Vec::new(), Vec::new());
    for (item, dev_flag) in items.iter().zip(is_dev) {
        if dev_flag { dev.push(item.clone()) } else { train.push(item.clone()) }
    }
    Ok((train, dev))
}
