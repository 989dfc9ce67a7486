//! Deterministic stand-in corpora in the on-disk formats the loaders read:
//! a four-class news corpus (AG-news CSV layout) and a binary sentiment
//! corpus (SST TSV layout) with matching word vectors and a POS lexicon.
//! Used for demos and tests when the real datasets are not at hand.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::LabeledText;
use crate::rng::{item_stream, substream, Stream};
use crate::{Error, Result};

const WORLD: &[&str] = &[
    "government", "minister", "election", "president", "parliament", "troops", "embassy", "rebels",
    "ceasefire", "diplomat", "treaty", "refugees", "border", "protest", "capital", "prime", "military",
    "sanctions", "summit", "nuclear", "iraq", "baghdad", "palestinian", "israeli", "kabul", "envoy",
    "coalition", "insurgents", "opposition", "vote", "regime", "foreign", "nations", "peace", "violence",
    "killed", "bombing", "militants", "hostage", "soldiers",
];
const SPORTS: &[&str] = &[
    "game", "season", "coach", "team", "players", "league", "championship", "victory", "defeat", "score",
    "goals", "tournament", "striker", "quarterback", "inning", "olympic", "medal", "match", "cup",
    "playoffs", "injury", "baseball", "football", "soccer", "tennis", "golf", "race", "champion",
    "stadium", "fans", "rookie", "pitcher", "touchdown", "halftime", "referee", "final", "win", "title",
    "homer", "sox",
];
const BUSINESS: &[&str] = &[
    "shares", "profit", "earnings", "market", "stocks", "investors", "company", "quarterly", "revenue",
    "sales", "dollar", "prices", "oil", "bank", "merger", "acquisition", "billion", "economy", "inflation",
    "interest", "rates", "retailer", "shareholders", "analysts", "forecast", "percent", "trading",
    "nasdaq", "dow", "crude", "corporate", "deal", "firm", "executive", "quarter", "growth", "jobs",
    "debt", "fund", "tax",
];
const SCITECH: &[&str] = &[
    "software", "internet", "computer", "microsoft", "google", "technology", "researchers", "scientists",
    "space", "nasa", "network", "wireless", "online", "users", "digital", "linux", "web", "chip", "intel",
    "mobile", "phone", "data", "security", "virus", "program", "study", "research", "launch", "satellite",
    "planet", "browser", "search", "apple", "download", "devices", "broadband", "engine", "robot",
    "genome", "spam",
];
const COMMON: &[&str] = &[
    "said", "new", "year", "week", "first", "two", "over", "will", "more", "last", "people", "time",
    "today", "report", "plans", "officials", "could", "monday", "tuesday", "wednesday", "thursday",
    "friday", "says", "news", "major", "group", "three", "day", "state", "top", "second", "next", "back",
    "announced", "expected", "may", "still", "since", "u.s.", "2004", "reuters", "ap", "-", "its", "big",
    "past", "city", "home", "night", "power", "public", "local", "million", "house", "early", "found", "long",
    "called", "control", "support", "move", "help", "set", "end", "high", "lead", "run", "days", "part",
];
const STOP: &[&str] = &[
    "the", "a", "of", "to", "in", "and", "on", "for", "with", "at", "by", "from", "is", "as", "that", "it",
    "an", "was", "has", "be", "his", "their", "are", "were", "this", "but", "not", "after",
];

const PREFIXES: &[&str] = &["re", "un", "pre", "co", "over", "anti", "post", "non", "mid", "sub", "out", "inter"];
const SUFFIXES: &[&str] = &[
    "s", "ed", "ing", "er", "ers", "al", "ism", "ist", "ity", "ment", "ion", "ly", "ward", "ship", "ize", "ic",
];
const SYLLABLES: &[&str] = &[
    "ba", "be", "bo", "ca", "co", "da", "de", "di", "do", "fa", "fe", "fo", "ga", "go", "ha", "he", "ho", "ka",
    "la", "le", "li", "lo", "ma", "me", "mi", "mo", "na", "ne", "no", "pa", "pe", "po", "ra", "re", "ri", "ro",
    "sa", "se", "si", "so", "ta", "te", "ti", "to", "va", "ve", "wa", "we", "ya", "za", "ar", "er", "in", "on",
    "an", "en", "or", "ul", "st", "nd", "th", "ch",
];

/// Word lists for the news generator: per-class topic words (real roots
/// and their derived forms) and a large shared filler vocabulary.
struct NewsLexicon {
    topics: [Vec<String>; 4],
    filler: Vec<String>,
}

fn derived_forms(root: &str, rng: &mut ChaCha8Rng, count: usize) -> Vec<String> {
    let mut out = vec![root.to_string()];
    for _ in 0..count {
        let stem = if root.len() > 5 && rng.gen_bool(0.5) { &root[..root.len() - 1] } else { root };
        let word = match rng.gen_range(0..3) {
            0 => format!("{stem}{}", SUFFIXES.choose(rng).expect("nonempty")),
            1 => format!("{}{root}", PREFIXES.choose(rng).expect("nonempty")),
            _ => format!("{}{stem}{}", PREFIXES.choose(rng).expect("nonempty"), SUFFIXES.choose(rng).expect("nonempty")),
        };
        out.push(word);
    }
    out
}

fn news_lexicon(seed: u64) -> NewsLexicon {
    let mut rng = substream(seed ^ 0x11e05, Stream::Synth);
    let mut seen = std::collections::HashSet::new();
    let unique = |words: Vec<String>, seen: &mut std::collections::HashSet<String>| -> Vec<String> {
        words.into_iter().filter(|w| w.len() <= 14 && seen.insert(w.clone())).collect()
    };
    let stop: Vec<String> = STOP.iter().map(|w| w.to_string()).collect();
    unique(stop, &mut seen);
    let mut topics: [Vec<String>; 4] = Default::default();
    for (c, list) in [WORLD, SPORTS, BUSINESS, SCITECH].iter().enumerate() {
        let mut words = Vec::new();
        for root in list.iter() {
            words.extend(derived_forms(root, &mut rng, 7));
        }
        let mut words = unique(words, &mut seen);
        words.shuffle(&mut rng);
        topics[c] = words;
    }
    let mut filler = Vec::new();
    for root in COMMON {
        filler.extend(derived_forms(root, &mut rng, 3));
    }
    for _ in 0..2500 {
        let syllables = rng.gen_range(2..=4);
        filler.push((0..syllables).map(|_| *SYLLABLES.choose(&mut rng).expect("nonempty")).collect());
    }
    let mut filler = unique(filler, &mut seen);
    filler.shuffle(&mut rng);
    NewsLexicon { topics, filler }
}

/// Zipf-like sampler over a list: rank k has weight 1/(k+1).
fn zipf(len: usize) -> WeightedIndex<f64> {
    WeightedIndex::new((0..len).map(|k| 1.0 / (k + 1) as f64)).expect("nonempty list")
}

/// Four balanced classes of news-like documents. Each class owns a set of
/// topic roots with derived forms; documents mix topic words, a few words
/// of other classes, a large filler vocabulary and stop words.
pub fn news_corpus(count: usize, seed: u64) -> Vec<LabeledText> {
    let lex = news_lexicon(seed);
    let topic_dist: Vec<WeightedIndex<f64>> = lex.topics.iter().map(|t| zipf(t.len())).collect();
    let filler_dist = zipf(lex.filler.len());
    (0..count)
        .map(|i| {
            let mut rng = item_stream(seed, Stream::Synth, i as u64);
            let label = i % 4;
            let title_len = rng.gen_range(4..=8);
            let desc_len = rng.gen_range(14..=26);
            let mut words = Vec::with_capacity(title_len + desc_len);
            for k in 0..title_len + desc_len {
                let roll: f64 = rng.gen();
                let mut word = if roll < 0.2 {
                    lex.topics[label][topic_dist[label].sample(&mut rng)].clone()
                } else if roll < 0.25 {
                    let other = (label + rng.gen_range(1..4)) % 4;
                    lex.topics[other][topic_dist[other].sample(&mut rng)].clone()
                } else if roll < 0.62 {
                    lex.filler[filler_dist.sample(&mut rng)].clone()
                } else {
                    STOP.choose(&mut rng).expect("nonempty").to_string()
                };
                if k + 1 == title_len || k + 1 == title_len + desc_len {
                    word.push('.');
                }
                words.push(word);
            }
            // a little label noise keeps the task from being separable
            let label = if rng.gen_bool(0.03) { (label + rng.gen_range(1..4)) % 4 } else { label };
            let title = words[..title_len].join(" ");
            let desc = words[title_len..].join(" ");
            LabeledText { text: format!("{title} {desc}"), label }
        })
        .collect()
}

/// Writes `"<class 1-4>","<title>","<description>"` rows. The first
/// sentence (up to the first period) becomes the title.
pub fn write_agnews_csv(path: &Path, rows: &[LabeledText]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().quote_style(csv::QuoteStyle::Always).from_writer(BufWriter::new(file));
    for row in rows {
        let (title, desc) = match row.text.find(". ") {
            Some(p) => (&row.text[..=p], &row.text[p + 2..]),
            None => (row.text.as_str(), ""),
        };
        w.write_record([(row.label + 1).to_string().as_str(), title, desc])
            .map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

struct Cluster {
    pos: &'static str,
    polarity: f64,
    words: &'static [&'static str],
}

const CLUSTERS: &[Cluster] = &[
    Cluster { pos: "ADJ", polarity: 1.0, words: &["good", "nice", "fine", "decent", "pleasant", "solid"] },
    Cluster { pos: "ADJ", polarity: 1.0, words: &["great", "terrific", "wonderful", "excellent", "superb", "brilliant"] },
    Cluster { pos: "ADJ", polarity: 1.0, words: &["funny", "amusing", "witty", "charming", "clever", "delightful"] },
    Cluster { pos: "ADJ", polarity: -1.0, words: &["bad", "poor", "weak", "mediocre", "lame", "flawed"] },
    Cluster { pos: "ADJ", polarity: -1.0, words: &["awful", "terrible", "dreadful", "horrible", "dismal", "atrocious"] },
    Cluster { pos: "ADJ", polarity: -1.0, words: &["boring", "dull", "tedious", "tiresome", "bland", "lifeless"] },
    Cluster { pos: "VERB", polarity: 1.0, words: &["loved", "enjoyed", "adored", "liked", "admired", "relished"] },
    Cluster { pos: "VERB", polarity: -1.0, words: &["hated", "disliked", "loathed", "despised", "resented", "detested"] },
    Cluster { pos: "NOUN", polarity: 0.0, words: &["movie", "film", "picture", "feature", "production"] },
    Cluster { pos: "NOUN", polarity: 0.0, words: &["story", "plot", "narrative", "storyline", "tale"] },
    Cluster { pos: "NOUN", polarity: 0.0, words: &["cast", "actors", "performers", "ensemble", "lead"] },
    Cluster { pos: "NOUN", polarity: 0.0, words: &["ending", "finale", "climax", "conclusion", "resolution"] },
    Cluster { pos: "ADV", polarity: 0.0, words: &["truly", "really", "genuinely", "utterly", "simply"] },
];

const FUNCTION_WORDS: &[(&str, &str)] = &[
    ("the", "DET"), ("a", "DET"), ("this", "DET"), ("is", "VERB"), ("was", "VERB"), ("and", "CONJ"),
    ("but", "CONJ"), ("i", "PRON"), ("it", "PRON"), ("of", "ADP"),
];

/// Per-word sentiment weight: cluster polarity times a word-specific
/// intensity in [0.4, 2.0].
fn sentiment_weights(seed: u64) -> Vec<(usize, &'static str, f64)> {
    let mut rng = substream(seed, Stream::Synth);
    let mut out = Vec::new();
    for (c, cluster) in CLUSTERS.iter().enumerate() {
        for &w in cluster.words {
            let intensity = rng.gen_range(0.4..2.0);
            out.push((c, w, cluster.polarity * intensity));
        }
    }
    out
}

/// Short reviews built from clauses such as "the plot is truly dull";
/// the label is the sign of the summed word weights.
pub fn sentiment_corpus(count: usize, seed: u64) -> Vec<LabeledText> {
    let weights = sentiment_weights(seed);
    let pick = |rng: &mut ChaCha8Rng, clusters: &[usize]| -> (&'static str, f64) {
        let c = *clusters.choose(rng).expect("nonempty");
        let members: Vec<_> = weights.iter().filter(|(k, _, _)| *k == c).collect();
        let (_, w, s) = members.choose(rng).expect("nonempty");
        (w, *s)
    };
    let adjectives = [0, 1, 2, 3, 4, 5];
    let nouns = [8, 9, 10, 11];
    let mut out = Vec::with_capacity(count);
    let mut i = 0u64;
    while out.len() < count {
        let mut rng = item_stream(seed ^ 0x5eed, Stream::Synth, i);
        i += 1;
        let clauses = rng.gen_range(1..=3);
        let mut words: Vec<&str> = Vec::new();
        let mut score = 0.0;
        for k in 0..clauses {
            if k > 0 {
                words.push(if rng.gen_bool(0.5) { "but" } else { "and" });
            }
            let (noun, _) = pick(&mut rng, &nouns);
            match rng.gen_range(0..3) {
                0 => {
                    let (adj, s) = pick(&mut rng, &adjectives);
                    words.extend(["the", noun, "is"]);
                    if rng.gen_bool(0.3) {
                        words.push(pick(&mut rng, &[12]).0);
                    }
                    words.push(adj);
                    score += s;
                }
                1 => {
                    let (verb, s) = pick(&mut rng, &[6, 7]);
                    words.extend(["i", verb, "the", noun]);
                    score += s;
                }
                _ => {
                    let (adj, s) = pick(&mut rng, &adjectives);
                    words.extend(["a", adj, noun]);
                    score += s;
                }
            }
        }
        if score.abs() < 1e-9 {
            continue;
        }
        out.push(LabeledText { text: words.join(" "), label: usize::from(score > 0.0) });
    }
    out
}

pub fn write_sst(path: &Path, rows: &[LabeledText]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        writeln!(w, "{}\t{}", row.label, row.text).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Word vectors where words of one synonym cluster lie close together
/// (cosine mostly above 0.8) and clusters are unrelated.
pub fn sentiment_embeddings(dim: usize, seed: u64) -> Vec<(String, Vec<f64>)> {
    let mut rng = substream(seed ^ 0xe1b, Stream::Synth);
    let mut gaussian = move || -> f64 {
        // Box-Muller
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let unit = |v: Vec<f64>| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect::<Vec<_>>()
    };
    let mut out = Vec::new();
    for cluster in CLUSTERS {
        let center = unit((0..dim).map(|_| gaussian()).collect());
        for &w in cluster.words {
            let noise = unit((0..dim).map(|_| gaussian()).collect());
            let v: Vec<f64> = center.iter().zip(&noise).map(|(c, n)| c + 0.4 * n).collect();
            out.push((w.to_string(), v));
        }
    }
    for &(w, _) in FUNCTION_WORDS {
        out.push((w.to_string(), unit((0..dim).map(|_| gaussian()).collect())));
    }
    out
}

pub fn sentiment_lexicon() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = CLUSTERS
        .iter()
        .flat_map(|c| c.words.iter().map(move |w| (w.to_string(), c.pos.to_string())))
        .collect();
    out.extend(FUNCTION_WORDS.iter().map(|(w, t)| (w.to_string(), t.to_string())));
    out
}

pub fn write_embeddings(path: &Path, table: &[(String, Vec<f64>)]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let dim = table.first().map_or(0, |(_, v)| v.len());
    writeln!(w, "{} {}", table.len(), dim).map_err(|e| Error::io(path, e))?;
    for (word, v) in table {
        let values: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
        writeln!(w, "{word} {}", values.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_lexicon(path: &Path, lexicon: &[(String, String)]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (word, tag) in lexicon {
        writeln!(w, "{word}\t{tag}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
