use diffcore::Tensor;

use super::alphabet::{Alphabet, EncodeOptions, PAD};
use crate::{Error, Result};

/// A document as an `m × n × |V|` one-hot tensor.
///
/// Stored sparsely as one symbol index per `(word, position)` slot; the dense
/// tensor is materialized on demand. Positions at or beyond a word's length
/// hold [`PAD`], and every word keeps at least one trailing padding slot.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OneHotText {
    max_words: usize,
    max_chars: usize,
    alphabet_size: usize,
    slots: Vec<usize>,
    lengths: Vec<usize>,
}

impl OneHotText {
    pub fn encode(text: &str, alphabet: &Alphabet, opts: &EncodeOptions) -> Result<Self> {
        let words = opts
            .normalize_words(text)
            .iter()
            .map(|w| w.chars().map(|c| alphabet.index_of(c)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Self::from_words(&words, opts.max_words, opts.max_chars, alphabet.len())
    }

    /// Builds a text from per-word symbol indices (no padding entries).
    pub fn from_words(words: &[Vec<usize>], max_words: usize, max_chars: usize, alphabet_size: usize) -> Result<Self> {
        if max_words == 0 || max_chars < 2 {
            return Err(Error::Degenerate(format!(
                "need at least one word of two slots, got m={max_words}, n={max_chars}"
            )));
        }
        if words.len() > max_words {
            return Err(Error::Contract(format!("{} words exceed capacity {max_words}", words.len())));
        }
        let mut slots = vec![PAD; max_words * max_chars];
        let mut lengths = vec![0; max_words];
        for (i, word) in words.iter().enumerate() {
            if word.len() > max_chars - 1 {
                return Err(Error::Contract(format!(
                    "word {i} has {} characters, capacity is {}",
                    word.len(),
                    max_chars - 1
                )));
            }
            for (j, &c) in word.iter().enumerate() {
                if c == PAD || c >= alphabet_size {
                    return Err(Error::Contract(format!("word {i} position {j}: invalid symbol {c}")));
                }
                slots[i * max_chars + j] = c;
            }
            lengths[i] = word.len();
        }
        Ok(Self { max_words, max_chars, alphabet_size, slots, lengths })
    }

    /// Reads back a dense tensor, checking that every slice is one-hot and
    /// that padding only appears as a suffix of each word.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let &[m, n, v] = t.shape() else {
            return Err(Error::Contract(format!("expected rank-3 tensor, got {:?}", t.shape())));
        };
        let mut words = Vec::new();
        let mut trailing_empty = 0;
        for i in 0..m {
            let mut word = Vec::new();
            let mut seen_pad = false;
            for j in 0..n {
                let slice = &t.data()[(i * n + j) * v..(i * n + j + 1) * v];
                let ones: Vec<usize> = (0..v).filter(|&c| slice[c] == 1.0).collect();
                if ones.len() != 1 || slice.iter().any(|&x| x != 0.0 && x != 1.0) {
                    return Err(Error::Contract(format!("slot ({i},{j}) is not one-hot")));
                }
                if ones[0] == PAD {
                    seen_pad = true;
                } else if seen_pad {
                    return Err(Error::Contract(format!("word {i}: symbol after padding at {j}")));
                } else {
                    word.push(ones[0]);
                }
            }
            if word.is_empty() {
                trailing_empty += 1;
            } else {
                trailing_empty = 0;
            }
            words.push(word);
        }
        words.truncate(m - trailing_empty);
        Self::from_words(&words, m, n, v)
    }

    /// `[m, n, |V|]`.
    pub fn shape(&self) -> [usize; 3] {
        [self.max_words, self.max_chars, self.alphabet_size]
    }

    pub fn max_words(&self) -> usize {
        self.max_words
    }

    pub fn max_chars(&self) -> usize {
        self.max_chars
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn length(&self, word: usize) -> usize {
        self.lengths[word]
    }

    /// Symbol at `(word, pos)`, [`PAD`] past the word's end.
    pub fn symbol(&self, word: usize, pos: usize) -> usize {
        self.slots[word * self.max_chars + pos]
    }

    /// Occupied symbols of one word.
    pub fn word(&self, word: usize) -> &[usize] {
        let start = word * self.max_chars;
        &self.slots[start..start + self.lengths[word]]
    }

    /// Non-padding characters in the document.
    pub fn char_count(&self) -> usize {
        self.lengths.iter().sum()
    }

    /// Number of leading word slots up to the last non-empty word (at least 1).
    pub fn active_words(&self) -> usize {
        self.lengths.iter().rposition(|&l| l > 0).map_or(1, |i| i + 1)
    }

    /// Replaces one word's symbols.
    pub fn with_word(&self, word: usize, symbols: &[usize]) -> Result<Self> {
        if word >= self.max_words {
            return Err(Error::Contract(format!("word index {word} out of range")));
        }
        if symbols.len() > self.max_chars - 1 {
            return Err(Error::Contract(format!(
                "word {word} would hold {} characters, capacity is {}",
                symbols.len(),
                self.max_chars - 1
            )));
        }
        if let Some(&bad) = symbols.iter().find(|&&c| c == PAD || c >= self.alphabet_size) {
            return Err(Error::Contract(format!("invalid symbol {bad} for word {word}")));
        }
        let mut out = self.clone();
        let start = word * self.max_chars;
        out.slots[start..start + self.max_chars].fill(PAD);
        out.slots[start..start + symbols.len()].copy_from_slice(symbols);
        out.lengths[word] = symbols.len();
        Ok(out)
    }

    /// Replaces a single occupied symbol.
    pub fn with_symbol(&self, word: usize, pos: usize, symbol: usize) -> Result<Self> {
        if word >= self.max_words || pos >= self.lengths[word] {
            return Err(Error::Contract(format!("({word},{pos}) is not an occupied position")));
        }
        if symbol == PAD || symbol >= self.alphabet_size {
            return Err(Error::Contract(format!("invalid symbol {symbol}")));
        }
        let mut out = self.clone();
        out.slots[word * self.max_chars + pos] = symbol;
        Ok(out)
    }

    pub fn to_tensor(&self) -> Tensor {
        let v = self.alphabet_size;
        let mut data = vec![0.0; self.slots.len() * v];
        for (slot, &c) in self.slots.iter().enumerate() {
            data[slot * v + c] = 1.0;
        }
        Tensor::new(vec![self.max_words, self.max_chars, v], data).expect("one-hot tensor is finite")
    }

    pub fn word_string(&self, word: usize, alphabet: &Alphabet) -> String {
        self.word(word).iter().filter_map(|&c| alphabet.char_at(c)).collect()
    }

    /// Space-joined non-empty words.
    pub fn decode(&self, alphabet: &Alphabet) -> String {
        (0..self.max_words)
            .filter(|&i| self.lengths[i] > 0)
            .map(|i| self.word_string(i, alphabet))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
