//! Word substitutions scored by the gradient at one-hot word vectors and
//! filtered to keep meaning: close embeddings, same part of speech, no stop
//! words and no swaps within a lexeme.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use crate::models::{Prediction, WordModel, PAD_WORD, UNK_WORD};
use crate::{Error, Result};

pub const UNKNOWN_TAG: &str = "UNK";

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// Pretrained word vectors.
#[derive(Clone, Debug, Default)]
pub struct Embeddings {
    pub dim: usize,
    pub table: HashMap<String, Vec<f64>>,
}

impl Embeddings {
    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.table.get(word).map(Vec::as_slice)
    }
}

/// Reads `word v1 … vd` lines, optionally preceded by a `count dim` header.
/// Every vector must have the same length.
pub fn load_embeddings(path: &Path) -> Result<Embeddings> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Embeddings::default();
    let mut dim = None;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = n + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if lineno == 1 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            dim = Some(fields[1].parse().expect("checked"));
            continue;
        }
        let values = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::parse(path, lineno, "vector entries must be finite numbers"))?;
        match dim {
            None if values.is_empty() => return Err(Error::parse(path, lineno, "word without a vector")),
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::parse(path, lineno, format!("expected {d} values, found {}", values.len())))
            }
            Some(_) => {}
        }
        out.table.insert(fields[0].to_string(), values);
    }
    out.dim = dim.unwrap_or(0);
    Ok(out)
}

/// Word → part-of-speech tag, with [`UNKNOWN_TAG`] for missing words.
#[derive(Clone, Debug, Default)]
pub struct PosLexicon {
    tags: HashMap<String, String>,
}

impl PosLexicon {
    /// Reads `word<TAB>tag` lines.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut tags = HashMap::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let (word, tag) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path, n + 1, "expected word<TAB>tag"))?;
            tags.insert(word.trim().to_string(), tag.trim().to_string());
        }
        Ok(Self { tags })
    }

    pub fn pos_tag(&self, word: &str) -> &str {
        self.tags.get(word).map_or(UNKNOWN_TAG, String::as_str)
    }
}

impl<S: Into<String>> FromIterator<(S, S)> for PosLexicon {
    fn from_iter<I: IntoIterator<Item = (S, S)>>(iter: I) -> Self {
        Self { tags: iter.into_iter().map(|(w, t)| (w.into(), t.into())).collect() }
    }
}

#[derive(Clone, Debug)]
pub struct StopWords(HashSet<String>);

impl Default for StopWords {
    /// The shipped English list.
    fn default() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }
}

impl StopWords {
    fn parse(text: &str) -> Self {
        Self(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_lowercase).collect())
    }

    /// One word per line.
    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Lexeme key: the Snowball English stem.
pub fn stem(word: &str) -> String {
    Stemmer::create(Algorithm::English).stem(word).into_owned()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordConstraintConfig {
    /// Cosine similarity must be strictly above this.
    pub threshold: f64,
    pub check_cosine: bool,
    pub check_pos: bool,
    pub check_stopwords: bool,
    /// Also refuse stop words as replacements.
    pub stopword_targets: bool,
    pub check_lexeme: bool,
    /// Measure similarity with the classifier's own embeddings instead of
    /// the pretrained table.
    pub model_embeddings: bool,
}

impl Default for WordConstraintConfig {
    fn default() -> Self {
        Self {
            threshold: 0.8,
            check_cosine: true,
            check_pos: true,
            check_stopwords: true,
            stopword_targets: true,
            check_lexeme: true,
            model_embeddings: false,
        }
    }
}

impl WordConstraintConfig {
    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.threshold) {
            return Err(Error::Contract(format!("cosine threshold {} outside [-1, 1]", self.threshold)));
        }
        Ok(())
    }
}

/// Everything the constraints consult.
pub struct WordResources {
    pub embeddings: Embeddings,
    pub pos: PosLexicon,
    pub stopwords: StopWords,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rejection {
    NoEmbedding,
    Cosine,
    Pos,
    StopWord,
    SameLexeme,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rejection::NoEmbedding => "no-embedding",
            Rejection::Cosine => "cosine",
            Rejection::Pos => "pos",
            Rejection::StopWord => "stop-word",
            Rejection::SameLexeme => "same-lexeme",
        })
    }
}

/// What each constraint saw for one `from → to` pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstraintRecord {
    pub cosine: Option<f64>,
    pub pos_from: String,
    pub pos_to: String,
    pub stop_from: bool,
    pub stop_to: bool,
    pub stem_from: String,
    pub stem_to: String,
}

impl ConstraintRecord {
    /// First failed constraint in the order embedding, cosine, POS, stop
    /// word, lexeme.
    pub fn verdict(&self, cfg: &WordConstraintConfig) -> std::result::Result<(), Rejection> {
        if cfg.check_cosine {
            match self.cosine {
                None => return Err(Rejection::NoEmbedding),
                Some(c) if !(c > cfg.threshold) => return Err(Rejection::Cosine),
                Some(_) => {}
            }
        }
        if cfg.check_pos && (self.pos_from != self.pos_to || self.pos_from == UNKNOWN_TAG) {
            return Err(Rejection::Pos);
        }
        if cfg.check_stopwords && (self.stop_from || (cfg.stopword_targets && self.stop_to)) {
            return Err(Rejection::StopWord);
        }
        if cfg.check_lexeme && self.stem_from == self.stem_to {
            return Err(Rejection::SameLexeme);
        }
        Ok(())
    }
}

impl fmt::Display for ConstraintRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cos = self.cosine.map_or("none".to_string(), |c| format!("{c:.4}"));
        write!(
            f,
            "cosine={cos};pos={}/{};stop={}/{};stem={}/{}",
            self.pos_from, self.pos_to, self.stop_from, self.stop_to, self.stem_from, self.stem_to
        )
    }
}

/// Computes the constraint record for `from → to`. With `model_embeddings`
/// the vectors come from `model` rather than the pretrained table.
pub fn check_pair(from: &str, to: &str, res: &WordResources, cfg: &WordConstraintConfig, model: Option<&WordModel>) -> ConstraintRecord {
    let cosine = match model.filter(|_| cfg.model_embeddings) {
        Some(m) => {
            let (a, b) = (m.index.id(from), m.index.id(to));
            (a != UNK_WORD && b != UNK_WORD).then(|| cosine(m.embedding_row(a), m.embedding_row(b)))
        }
        None => match (res.embeddings.get(from), res.embeddings.get(to)) {
            (Some(a), Some(b)) => Some(cosine(a, b)),
            _ => None,
        },
    };
    ConstraintRecord {
        cosine,
        pos_from: res.pos.pos_tag(from).to_string(),
        pos_to: res.pos.pos_tag(to).to_string(),
        stop_from: res.stopwords.contains(from),
        stop_to: res.stopwords.contains(to),
        stem_from: stem(from),
        stem_to: stem(to),
    }
}

/// A scored replacement of the word at `position`.
#[derive(Clone, Debug, PartialEq)]
pub struct WordCandidate {
    pub position: usize,
    pub from: String,
    pub to: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WordSubstitution {
    pub position: usize,
    pub from: String,
    pub to: String,
    pub score: f64,
    pub record: ConstraintRecord,
}

/// Splits candidates into those passing every enabled constraint and the
/// rejected ones with their reasons, preserving input order in both.
pub fn constraint_filter(
    candidates: &[WordCandidate],
    res: &WordResources,
    cfg: &WordConstraintConfig,
    model: Option<&WordModel>,
) -> (Vec<WordSubstitution>, Vec<(WordCandidate, Rejection)>) {
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for c in candidates {
        let record = check_pair(&c.from, &c.to, res, cfg, model);
        match record.verdict(cfg) {
            Ok(()) => kept.push(WordSubstitution { position: c.position, from: c.from.clone(), to: c.to.clone(), score: c.score, record }),
            Err(why) => rejected.push((c.clone(), why)),
        }
    }
    (kept, rejected)
}

/// A substitution by word id with its first-order score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WordFlip {
    pub position: usize,
    pub from: usize,
    pub to: usize,
    /// `∂J/∂x[to] − ∂J/∂x[from]` at that position.
    pub raw: f64,
    /// `raw / √2`.
    pub normalized: f64,
}

/// Scores every replacement of every real word (not padding) by any other
/// known word from one backward pass.
pub fn score_word_flips(model: &WordModel, ids: &[usize], label: usize) -> Result<Vec<WordFlip>> {
    let (_, grad) = model.input_gradient(ids, label)?;
    Ok(flips_from_gradient(&grad, ids, model.index.len()))
}

fn flips_from_gradient(grad: &crate::models::GradientField, ids: &[usize], vocab: usize) -> Vec<WordFlip> {
    let mut out = Vec::new();
    for (i, &from) in ids.iter().enumerate() {
        let base = grad.at2(i, from);
        for to in 0..vocab {
            if to == from || to == PAD_WORD || to == UNK_WORD {
                continue;
            }
            let raw = grad.at2(i, to) - base;
            out.push(WordFlip { position: i, from, to, raw, normalized: raw / std::f64::consts::SQRT_2 });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordAttackConfig {
    pub beam_width: usize,
    pub max_flips: usize,
    pub constraints: WordConstraintConfig,
}

impl Default for WordAttackConfig {
    fn default() -> Self {
        Self { beam_width: 10, max_flips: 2, constraints: WordConstraintConfig::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WordFailure {
    /// No substitution survived the constraints.
    Exhausted,
    /// The flip budget ran out first.
    Budget,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WordAttackOutcome {
    pub success: bool,
    pub prediction: Prediction,
    pub substitutions: Vec<WordSubstitution>,
    pub failure: Option<WordFailure>,
    pub forward_passes: usize,
    pub backward_passes: usize,
    pub final_ids: Vec<usize>,
}

/// Allowed replacements per source word id, computed on first use.
struct TargetCache<'a> {
    model: &'a WordModel,
    res: &'a WordResources,
    cfg: &'a WordConstraintConfig,
    allowed: HashMap<usize, HashMap<usize, ConstraintRecord>>,
}

impl TargetCache<'_> {
    fn targets(&mut self, from: usize) -> &HashMap<usize, ConstraintRecord> {
        let (model, res, cfg) = (self.model, self.res, self.cfg);
        self.allowed.entry(from).or_insert_with(|| {
            let src = model.index.word(from);
            (2..model.index.len())
                .filter(|&to| to != from)
                .filter_map(|to| {
                    let record = check_pair(src, model.index.word(to), res, cfg, Some(model));
                    record.verdict(cfg).is_ok().then_some((to, record))
                })
                .collect()
        })
    }
}

#[derive(Clone)]
struct WordNode {
    ids: Vec<usize>,
    subs: Vec<WordSubstitution>,
    score: f64,
}

/// Beam search over constrained substitutions at distinct positions. The
/// attack succeeds when the predicted label changes.
pub fn word_attack(model: &WordModel, ids: &[usize], label: usize, res: &WordResources, config: &WordAttackConfig) -> Result<WordAttackOutcome> {
    config.constraints.validate()?;
    if config.beam_width == 0 {
        return Err(Error::Contract("beam width must be at least 1".into()));
    }
    let mut cache = TargetCache { model, res, cfg: &config.constraints, allowed: HashMap::new() };
    let mut forward = 0;
    let mut backward = 0;
    let mut beam = vec![WordNode { ids: ids.to_vec(), subs: vec![], score: 0.0 }];
    let mut visited: HashSet<Vec<usize>> = HashSet::from([ids.to_vec()]);
    let mut depth = 0;
    loop {
        let mut evaluated = Vec::with_capacity(beam.len());
        for node in beam {
            let eval = model.evaluate(&node.ids, label)?;
            forward += 1;
            evaluated.push((node, eval));
        }
        let mut best_success: Option<usize> = None;
        for (k, (node, eval)) in evaluated.iter().enumerate() {
            if eval.prediction.class != label && best_success.map_or(true, |b| node.score > evaluated[b].0.score) {
                best_success = Some(k);
            }
        }
        let finish = |evaluated: Vec<(WordNode, crate::models::Evaluation)>, k: usize, success: bool, failure, forward, backward| {
            let (node, eval) = evaluated.into_iter().nth(k).expect("index in range");
            WordAttackOutcome {
                success,
                prediction: eval.prediction,
                substitutions: node.subs,
                failure,
                forward_passes: forward,
                backward_passes: backward,
                final_ids: node.ids,
            }
        };
        if let Some(k) = best_success {
            return Ok(finish(evaluated, k, true, None, forward, backward));
        }
        let best_node = (0..evaluated.len()).fold(0, |b, k| if evaluated[k].0.score > evaluated[b].0.score { k } else { b });
        if depth == config.max_flips {
            return Ok(finish(evaluated, best_node, false, Some(WordFailure::Budget), forward, backward));
        }
        let mut candidates: Vec<(f64, usize, usize, usize, usize)> = Vec::new();
        for (k, (node, _)) in evaluated.iter().enumerate() {
            let (_, grad) = model.input_gradient(&node.ids, label)?;
            forward += 1;
            backward += 1;
            let used: HashSet<usize> = node.subs.iter().map(|s| s.position).collect();
            for f in flips_from_gradient(&grad, &node.ids, model.index.len()) {
                if used.contains(&f.position) || f.from == UNK_WORD || !cache.targets(f.from).contains_key(&f.to) {
                    continue;
                }
                candidates.push((node.score + f.normalized, f.position, f.to, k, f.from));
            }
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2, a.3).cmp(&(b.1, b.2, b.3))));
        let mut next = Vec::new();
        for (total, position, to, parent, from) in candidates {
            if next.len() == config.beam_width {
                break;
            }
            let mut ids = evaluated[parent].0.ids.clone();
            ids[position] = to;
            if !visited.insert(ids.clone()) {
                continue;
            }
            let record = cache.targets(from)[&to].clone();
            let mut subs = evaluated[parent].0.subs.clone();
            subs.push(WordSubstitution {
                position,
                from: model.index.word(from).to_string(),
                to: model.index.word(to).to_string(),
                score: total - evaluated[parent].0.score,
                record,
            });
            next.push(WordNode { ids, subs, score: total });
        }
        if next.is_empty() {
            return Ok(finish(evaluated, best_node, false, Some(WordFailure::Exhausted), forward, backward));
        }
        beam = next;
        depth += 1;
    }
}

/// One attacked sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct WordAttackRecord {
    pub id: usize,
    pub eligible: bool,
    pub outcome: Option<WordAttackOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WordAttackSummary {
    pub examples: usize,
    pub eligible: usize,
    pub successes: usize,
}

/// Attacks the correctly classified sentences among `(ids, label)` pairs.
pub fn word_attack_dataset(
    model: &WordModel,
    examples: &[(Vec<usize>, usize)],
    res: &WordResources,
    config: &WordAttackConfig,
) -> Result<(Vec<WordAttackRecord>, WordAttackSummary)> {
    let mut records = Vec::with_capacity(examples.len());
    for (id, (ids, label)) in examples.iter().enumerate() {
        let eligible = model.predict(ids)?.class == *label;
        let outcome = if eligible { Some(word_attack(model, ids, *label, res, config)?) } else { None };
        records.push(WordAttackRecord { id, eligible, outcome });
    }
    let summary = WordAttackSummary {
        examples: records.len(),
        eligible: records.iter().filter(|r| r.eligible).count(),
        successes: records.iter().filter(|r| r.outcome.as_ref().is_some_and(|o| o.success)).count(),
    };
    Ok((records, summary))
}

#[derive(Serialize)]
struct WordRow<'a> {
    sentence_id: usize,
    position: Option<usize>,
    from: &'a str,
    to: &'a str,
    constraints: String,
    success: bool,
}

/// One row per substitution; attacked sentences without any get a single
/// row with empty substitution fields.
pub fn write_word_attack_csv<W: Write>(out: W, records: &[WordAttackRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        let Some(o) = &r.outcome else { continue };
        if o.substitutions.is_empty() {
            w.serialize(WordRow { sentence_id: r.id, position: None, from: "", to: "", constraints: String::new(), success: o.success })?;
        }
        for s in &o.substitutions {
            w.serialize(WordRow {
                sentence_id: r.id,
                position: Some(s.position),
                from: &s.from,
                to: &s.to,
                constraints: s.record.to_string(),
                success: o.success,
            })?;
        }
    }
    w.flush().map_err(|e| Error::Output(e.to_string()))
}
