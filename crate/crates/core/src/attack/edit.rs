use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Alphabet, OneHotText, WordVocab, PAD};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditKind {
    Flip,
    Insert,
    Delete,
}

impl EditKind {
    pub const ALL: [EditKind; 3] = [EditKind::Flip, EditKind::Insert, EditKind::Delete];

    pub fn name(self) -> &'static str {
        match self {
            EditKind::Flip => "flip",
            EditKind::Insert => "insert",
            EditKind::Delete => "delete",
        }
    }
}

/// One character-level edit. `symbol` is the new character for flips and
/// inserts and 0 for deletes. The derived ordering is the tie-break order
/// `(kind, word, pos, symbol)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EditOp {
    pub kind: EditKind,
    pub word: usize,
    pub pos: usize,
    pub symbol: usize,
}

/// A single slot change `from → to` at `(word, pos)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AtomicFlip {
    pub word: usize,
    pub pos: usize,
    pub from: usize,
    pub to: usize,
}

impl EditOp {
    pub fn flip(word: usize, pos: usize, symbol: usize) -> Self {
        Self { kind: EditKind::Flip, word, pos, symbol }
    }

    pub fn insert(word: usize, pos: usize, symbol: usize) -> Self {
        Self { kind: EditKind::Insert, word, pos, symbol }
    }

    pub fn delete(word: usize, pos: usize) -> Self {
        Self { kind: EditKind::Delete, word, pos, symbol: PAD }
    }

    /// Symbols of the edited word, or a contract error if the edit is not
    /// legal for `x`.
    pub fn result_word(&self, x: &OneHotText) -> Result<Vec<usize>> {
        let [m, n, v] = x.shape();
        let illegal = |why: &str| Err(Error::Contract(format!("{self:?} is illegal: {why}")));
        if self.word >= m {
            return illegal("word index out of range");
        }
        let word = x.word(self.word);
        let len = word.len();
        match self.kind {
            EditKind::Flip => {
                if self.pos >= len {
                    return illegal("position is padding");
                }
                if self.symbol == PAD || self.symbol >= v || self.symbol == word[self.pos] {
                    return illegal("target symbol");
                }
                let mut out = word.to_vec();
                out[self.pos] = self.symbol;
                Ok(out)
            }
            EditKind::Insert => {
                if len == 0 || len + 2 > n || self.pos > len {
                    return illegal("no room or position past the end");
                }
                if self.symbol == PAD || self.symbol >= v {
                    return illegal("target symbol");
                }
                let mut out = word.to_vec();
                out.insert(self.pos, self.symbol);
                Ok(out)
            }
            EditKind::Delete => {
                if len < 2 || self.pos >= len {
                    return illegal("word too short or position is padding");
                }
                let mut out = word.to_vec();
                out.remove(self.pos);
                Ok(out)
            }
        }
    }

    /// The slot changes this edit amounts to: the flipped slot for a flip,
    /// the right shift from `pos` through the first padding slot for an
    /// insert, the left shift from `pos` with the last occupied slot
    /// becoming padding for a delete. Slots a shift leaves unchanged (equal
    /// neighbouring characters) are not listed.
    pub fn decompose(&self, x: &OneHotText) -> Result<Vec<AtomicFlip>> {
        let after = self.result_word(x)?;
        let before = x.word(self.word);
        let (start, end) = match self.kind {
            EditKind::Flip => (self.pos, self.pos + 1),
            EditKind::Insert => (self.pos, before.len() + 1),
            EditKind::Delete => (self.pos, before.len()),
        };
        Ok((start..end)
            .filter_map(|pos| {
                let from = before.get(pos).copied().unwrap_or(PAD);
                let to = after.get(pos).copied().unwrap_or(PAD);
                (from != to).then_some(AtomicFlip { word: self.word, pos, from, to })
            })
            .collect())
    }

    pub fn apply(&self, x: &OneHotText) -> Result<OneHotText> {
        x.with_word(self.word, &self.result_word(x)?)
    }

    /// Human-readable form such as `flip(2,0,'a'→'e')`.
    pub fn describe(&self, x: &OneHotText, alphabet: &Alphabet) -> String {
        let ch = |s: usize| alphabet.char_at(s).unwrap_or('∅');
        match self.kind {
            EditKind::Flip => {
                format!("flip({},{},'{}'→'{}')", self.word, self.pos, ch(x.symbol(self.word, self.pos)), ch(self.symbol))
            }
            EditKind::Insert => format!("insert({},{},'{}')", self.word, self.pos, ch(self.symbol)),
            EditKind::Delete => format!("delete({},{},'{}')", self.word, self.pos, ch(x.symbol(self.word, self.pos))),
        }
    }
}

/// Free function form of [`EditOp::apply`].
pub fn apply_edit(x: &OneHotText, edit: &EditOp) -> Result<OneHotText> {
    edit.apply(x)
}

/// Training vocabulary as symbol sequences, for the "new word must not be
/// a known word" constraint. Words containing characters outside the
/// alphabet cannot be produced by an edit and are dropped.
#[derive(Clone, Debug, Default)]
pub struct VocabIndex {
    words: HashSet<Vec<usize>>,
}

impl VocabIndex {
    pub fn new(vocab: &WordVocab, alphabet: &Alphabet) -> Self {
        let words = vocab
            .sorted()
            .into_iter()
            .filter_map(|w| w.chars().map(|c| alphabet.index_of(c).ok()).collect::<Option<Vec<_>>>())
            .collect();
        Self { words }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn contains(&self, symbols: &[usize]) -> bool {
        self.words.contains(symbols)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Which edits `enumerate_edits` produces.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditFilter {
    pub kinds: Vec<EditKind>,
    /// Drop edits whose resulting word is in the vocabulary.
    pub vocab_constraint: bool,
}

impl EditFilter {
    pub fn allows(&self, kind: EditKind) -> bool {
        self.kinds.contains(&kind)
    }
}

/// Every legal edit of the allowed kinds, in tie-break order.
///
/// Inserts and deletes that produce the same slot changes as another edit
/// of their kind (inserting next to an equal character, deleting one of two
/// equal neighbours) are listed once: the insert at the leftmost position
/// and the delete at the rightmost.
pub fn enumerate_edits(x: &OneHotText, vocab: &VocabIndex, filter: &EditFilter) -> Vec<EditOp> {
    let [m, n, v] = x.shape();
    let mut out = Vec::new();
    let keep = |word: &[usize]| !(filter.vocab_constraint && vocab.contains(word));
    let mut scratch = Vec::with_capacity(n);
    if filter.allows(EditKind::Flip) {
        for i in 0..m {
            let word = x.word(i);
            for j in 0..word.len() {
                for b in 1..v {
                    if b == word[j] {
                        continue;
                    }
                    scratch.clear();
                    scratch.extend_from_slice(word);
                    scratch[j] = b;
                    if keep(&scratch) {
                        out.push(EditOp::flip(i, j, b));
                    }
                }
            }
        }
    }
    if filter.allows(EditKind::Insert) {
        for i in 0..m {
            let word = x.word(i);
            if word.is_empty() || word.len() + 2 > n {
                continue;
            }
            for j in 0..=word.len() {
                for b in 1..v {
                    if j > 0 && word[j - 1] == b {
                        continue;
                    }
                    scratch.clear();
                    scratch.extend_from_slice(word);
                    scratch.insert(j, b);
                    if keep(&scratch) {
                        out.push(EditOp::insert(i, j, b));
                    }
                }
            }
        }
    }
    if filter.allows(EditKind::Delete) {
        for i in 0..m {
            let word = x.word(i);
            if word.len() < 2 {
                continue;
            }
            for j in 0..word.len() {
                if j + 1 < word.len() && word[j] == word[j + 1] {
                    continue;
                }
                scratch.clear();
                scratch.extend_from_slice(word);
                scratch.remove(j);
                if keep(&scratch) {
                    out.push(EditOp::delete(i, j));
                }
            }
        }
    }
    out
}
