//! Success-versus-confidence curves, edit statistics and nearest-neighbour
//! probes of the character model's word representations.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::{attack_dataset, AttackConfig, AttackRecord, Method, VocabIndex};
use crate::corpus::LabeledExample;
use crate::models::CharModel;
use crate::{Error, Result};

pub const DEFAULT_TAUS: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveMode {
    /// A fresh attack per threshold, stopping at that threshold.
    Reattack,
    /// One attack run to the full budget; each threshold is applied to the
    /// highest wrong-class confidence along the returned path.
    Rethreshold,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub tau: f64,
    pub success_rate: Option<f64>,
    pub eligible: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceCurve {
    pub points: Vec<CurvePoint>,
    /// Adjacent thresholds `(lower, higher)` where the rate went up.
    pub violations: Vec<(f64, f64)>,
}

fn check_taus(taus: &[f64]) -> Result<()> {
    if taus.is_empty() || taus.iter().any(|t| !(0.0..1.0).contains(t)) || taus.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Contract("thresholds must be strictly ascending values in [0, 1)".into()));
    }
    Ok(())
}

/// Attack success rate at each threshold in `taus`.
#[allow(clippy::too_many_arguments)]
pub fn success_vs_confidence(
    model: &CharModel,
    examples: &[LabeledExample],
    vocab: &VocabIndex,
    method: Method,
    config: &AttackConfig,
    taus: &[f64],
    mode: CurveMode,
    jobs: usize,
) -> Result<ConfidenceCurve> {
    check_taus(taus)?;
    let points = match mode {
        CurveMode::Reattack => taus
            .iter()
            .map(|&tau| {
                let report = attack_dataset(model, examples, vocab, method, &AttackConfig { tau, ..config.clone() }, jobs)?;
                Ok(CurvePoint { tau, success_rate: report.summary.success_rate, eligible: report.summary.eligible })
            })
            .collect::<Result<Vec<_>>>()?,
        CurveMode::Rethreshold => {
            let run = AttackConfig { tau: taus[0], check_every_step: false, ..config.clone() };
            let report = attack_dataset(model, examples, vocab, method, &run, jobs)?;
            let eligible = report.summary.eligible;
            taus.iter()
                .map(|&tau| {
                    let wins = report
                        .records
                        .iter()
                        .filter(|r| r.eligible && r.outcome.peak_wrong_confidence > 0.0 && r.outcome.peak_wrong_confidence >= tau)
                        .count();
                    CurvePoint { tau, success_rate: (eligible > 0).then(|| wins as f64 / eligible as f64), eligible }
                })
                .collect()
        }
    };
    let violations = points
        .windows(2)
        .filter(|w| matches!((w[0].success_rate, w[1].success_rate), (Some(a), Some(b)) if b > a))
        .map(|w| (w[0].tau, w[1].tau))
        .collect();
    Ok(ConfidenceCurve { points, violations })
}

pub fn write_curve_csv<W: Write>(out: W, curve: &ConfidenceCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in &curve.points {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::Output(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum EditStatistics {
    /// No successful attack to describe.
    Empty,
    Report {
        successes: usize,
        /// Edits of each kind (flip, insert, delete) over all successes.
        counts: [usize; 3],
        distribution: [f64; 3],
        mean_char_change: f64,
    },
}

pub fn edit_statistics(records: &[AttackRecord]) -> EditStatistics {
    let wins: Vec<&AttackRecord> = records.iter().filter(|r| r.eligible && r.outcome.success).collect();
    if wins.is_empty() {
        return EditStatistics::Empty;
    }
    let mut counts = [0; 3];
    for r in &wins {
        for (c, k) in counts.iter_mut().zip(r.outcome.kind_counts()) {
            *c += k;
        }
    }
    let total = counts.iter().sum::<usize>().max(1) as f64;
    EditStatistics::Report {
        successes: wins.len(),
        counts,
        distribution: counts.map(|c| c as f64 / total),
        mean_char_change: wins.iter().map(|r| r.outcome.char_change()).sum::<f64>() / wins.len() as f64,
    }
}

/// Highway-layer representations of every encodable vocabulary word.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborIndex {
    pub words: Vec<String>,
    pub reps: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    checkpoint_sha256: String,
    words: Vec<String>,
    dim: usize,
}

const CACHE_MAGIC: &[u8] = b"HOTFLIP-NEIGHBORS1\n";

impl NeighborIndex {
    /// Words are truncated to the model's word capacity; words with
    /// characters outside the alphabet are skipped.
    pub fn build(model: &CharModel) -> Result<Self> {
        let cap = model.config.encode.max_chars - 1;
        let mut words: Vec<String> = model.vocab.sorted().into_iter().map(|w| w.chars().take(cap).collect()).collect();
        words.sort();
        words.dedup();
        let mut kept = Vec::new();
        let mut symbols = Vec::new();
        for w in words {
            if let Ok(s) = w.chars().map(|c| model.alphabet.index_of(c)).collect::<Result<Vec<_>>>() {
                if !s.is_empty() {
                    kept.push(w);
                    symbols.push(s);
                }
            }
        }
        let reps = model.highway_representations(&symbols)?;
        Ok(Self { words: kept, reps })
    }

    pub fn cache_path(checkpoint: &Path) -> PathBuf {
        let mut name = checkpoint.as_os_str().to_owned();
        name.push(".neighbors");
        PathBuf::from(name)
    }

    /// Loads the cache beside `checkpoint` if it was built from the same
    /// checkpoint bytes, else builds and writes it.
    pub fn load_or_build(model: &CharModel, checkpoint: &Path) -> Result<Self> {
        let bytes = fs::read(checkpoint).map_err(|e| Error::io(checkpoint, e))?;
        let hash = hex::encode(Sha256::digest(&bytes));
        let path = Self::cache_path(checkpoint);
        if let Ok(cached) = fs::read(&path) {
            if let Some(index) = Self::decode(&cached, &hash) {
                return Ok(index);
            }
        }
        let index = Self::build(model)?;
        fs::write(&path, index.encode(&hash)?).map_err(|e| Error::io(&path, e))?;
        Ok(index)
    }

    fn encode(&self, hash: &str) -> Result<Vec<u8>> {
        let dim = self.reps.first().map_or(0, Vec::len);
        let header = CacheHeader { checkpoint_sha256: hash.to_string(), words: self.words.clone(), dim };
        let mut out = CACHE_MAGIC.to_vec();
        out.extend(serde_json::to_vec(&header)?);
        out.push(b'\n');
        for v in self.reps.iter().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    fn decode(bytes: &[u8], hash: &str) -> Option<Self> {
        let rest = bytes.strip_prefix(CACHE_MAGIC)?;
        let nl = rest.iter().position(|&b| b == b'\n')?;
        let header: CacheHeader = serde_json::from_slice(&rest[..nl]).ok()?;
        if header.checkpoint_sha256 != hash {
            return None;
        }
        let data = &rest[nl + 1..];
        if data.len() != header.words.len() * header.dim * 8 {
            return None;
        }
        let values: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let reps = if header.dim == 0 { vec![vec![]; header.words.len()] } else { values.chunks(header.dim).map(<[f64]>::to_vec).collect() };
        Some(Self { words: header.words, reps })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NeighborReport {
    pub query: String,
    /// The query is itself an indexed word (and so left out of the list).
    pub in_vocab: bool,
    pub neighbors: Vec<(String, f64)>,
}

/// The `k` indexed words whose highway representation is most
/// cosine-similar to the query's, best first (ties by word).
pub fn nearest_neighbors(model: &CharModel, index: &NeighborIndex, query: &str, k: usize) -> Result<NeighborReport> {
    let symbols = query.chars().map(|c| model.alphabet.index_of(c)).collect::<Result<Vec<_>>>()?;
    if symbols.is_empty() || symbols.len() > model.config.encode.max_chars - 1 {
        return Err(Error::Contract(format!("query {query:?} must have 1..={} characters", model.config.encode.max_chars - 1)));
    }
    let rep = model.highway_representations(&[symbols])?.remove(0);
    let mut scored: Vec<(String, f64)> = index
        .words
        .iter()
        .zip(&index.reps)
        .filter(|(w, _)| w.as_str() != query)
        .map(|(w, r)| (w.clone(), crate::wordattack::cosine(&rep, r)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(NeighborReport { query: query.to_string(), in_vocab: index.words.iter().any(|w| w == query), neighbors: scored })
}

#[derive(Serialize)]
struct NeighborRow<'a> {
    query: &'a str,
    rank: usize,
    neighbor: &'a str,
    cosine: f64,
}

pub fn write_neighbors_csv<W: Write>(out: W, reports: &[NeighborReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        for (rank, (word, cos)) in r.neighbors.iter().enumerate() {
            w.serialize(NeighborRow { query: &r.query, rank: rank + 1, neighbor: word, cosine: *cos })?;
        }
    }
    w.flush().map_err(|e| Error::Output(e.to_string()))
}
