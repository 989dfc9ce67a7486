use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Index of the padding symbol in every alphabet.
pub const PAD: usize = 0;

/// Ordered character set with the padding symbol reserved at index 0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Alphabet {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl Alphabet {
    /// Alphabet over the given characters (deduplicated, sorted).
    /// Whitespace is never part of an alphabet: words are whitespace-delimited.
    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Self {
        let set: BTreeSet<char> = chars.into_iter().filter(|c| !c.is_whitespace()).collect();
        let chars: Vec<char> = set.into_iter().collect();
        let index = chars.iter().enumerate().map(|(i, &c)| (c, i + 1)).collect();
        Self { chars, index }
    }

    /// Number of symbols including padding.
    pub fn len(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, ch: char) -> Result<usize> {
        self.index.get(&ch).copied().ok_or(Error::Encode { ch })
    }

    /// Character at `index`; `None` for padding or out of range.
    pub fn char_at(&self, index: usize) -> Option<char> {
        index.checked_sub(1).and_then(|i| self.chars.get(i)).copied()
    }

    /// Non-padding characters in index order.
    pub fn symbols(&self) -> &[char] {
        &self.chars
    }
}

impl From<Alphabet> for String {
    fn from(a: Alphabet) -> String {
        a.chars.into_iter().collect()
    }
}

impl TryFrom<String> for Alphabet {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        let alphabet = Alphabet::from_chars(s.chars());
        if alphabet.chars.len() != s.chars().count() {
            return Err("alphabet string must hold distinct, sorted, non-space characters".into());
        }
        Ok(alphabet)
    }
}

/// Set of words seen in training text.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct WordVocab {
    words: HashSet<String>,
}

impl WordVocab {
    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Words in sorted order.
    pub fn sorted(&self) -> Vec<&str> {
        let mut words: Vec<&str> = self.words.iter().map(String::as_str).collect();
        words.sort_unstable();
        words
    }
}

impl FromIterator<String> for WordVocab {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        Self { words: iter.into_iter().collect() }
    }
}

impl From<Vec<String>> for WordVocab {
    fn from(words: Vec<String>) -> Self {
        words.into_iter().collect()
    }
}

impl From<WordVocab> for Vec<String> {
    fn from(v: WordVocab) -> Self {
        let mut words: Vec<String> = v.words.into_iter().collect();
        words.sort_unstable();
        words
    }
}

/// Text normalization and tensor sizing shared by encoding and vocabulary
/// construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeOptions {
    /// Words per document (m).
    pub max_words: usize,
    /// Character slots per word (n); words keep at most n−1 characters.
    pub max_chars: usize,
    pub lowercase: bool,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        Self { max_words: 40, max_chars: 16, lowercase: true }
    }
}

impl EncodeOptions {
    /// Whitespace tokens after case folding, truncated to the tensor size.
    pub fn normalize_words(&self, text: &str) -> Vec<String> {
        text.split_whitespace()
            .take(self.max_words)
            .map(|w| {
                let w = if self.lowercase { w.to_lowercase() } else { w.to_string() };
                w.chars().take(self.max_chars.saturating_sub(1)).collect()
            })
            .collect()
    }

    pub fn normalize(&self, text: &str) -> String {
        self.normalize_words(text).join(" ")
    }

    /// Case folding and tokenization without truncation.
    pub fn tokens<'a>(&self, text: &'a str) -> impl Iterator<Item = String> + 'a {
        let lowercase = self.lowercase;
        text.split_whitespace()
            .map(move |w| if lowercase { w.to_lowercase() } else { w.to_string() })
    }
}

pub fn build_alphabet<'a>(corpus: impl IntoIterator<Item = &'a str>, opts: &EncodeOptions) -> Result<Alphabet> {
    let mut chars = BTreeSet::new();
    let mut any = false;
    for text in corpus {
        any = true;
        for token in opts.tokens(text) {
            chars.extend(token.chars());
        }
    }
    if !any {
        return Err(Error::Degenerate("cannot build an alphabet from an empty corpus".into()));
    }
    Ok(Alphabet::from_chars(chars))
}

pub fn build_word_vocab<'a>(corpus: impl IntoIterator<Item = &'a str>, opts: &EncodeOptions) -> Result<WordVocab> {
    let mut words = HashSet::new();
    let mut any = false;
    for text in corpus {
        any = true;
        words.extend(opts.tokens(text));
    }
    if !any {
        return Err(Error::Degenerate("cannot build a vocabulary from an empty corpus".into()));
    }
    Ok(WordVocab { words })
}
