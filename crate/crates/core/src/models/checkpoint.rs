//! Checkpoint files: the magic line `HOTFLIP1`, one line of JSON header
//! (architecture, symbol tables, tensor directory), then every tensor as
//! little-endian `f64`s at the byte offsets listed in the header, counted
//! from the end of the header line.

use std::fs;
use std::path::Path;

use diffcore::Tensor;
use serde::{Deserialize, Serialize};

use super::{CharModel, CharModelConfig, ParamSet, WordIndex, WordModel, WordModelConfig};
use crate::corpus::{Alphabet, WordVocab};
use crate::{Error, Result};

pub const MAGIC: &[u8] = b"HOTFLIP1\n";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "lowercase")]
enum Header {
    Char { config: CharModelConfig, alphabet: Alphabet, vocab: WordVocab, tensors: Vec<TensorEntry> },
    Word { config: WordModelConfig, index: WordIndex, tensors: Vec<TensorEntry> },
}

/// Either model kind, as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub enum Checkpoint {
    Char(CharModel),
    Word(WordModel),
}

fn directory(params: &ParamSet) -> Vec<TensorEntry> {
    let mut offset = 0;
    params
        .names()
        .iter()
        .zip(params.tensors())
        .map(|(name, t)| {
            let e = TensorEntry { name: name.clone(), shape: t.shape().to_vec(), offset };
            offset += t.len() * 8;
            e
        })
        .collect()
}

impl Checkpoint {
    fn params(&self) -> &ParamSet {
        match self {
            Checkpoint::Char(m) => m.params(),
            Checkpoint::Word(m) => m.params(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let tensors = directory(self.params());
        let header = match self {
            Checkpoint::Char(m) => Header::Char {
                config: m.config.clone(),
                alphabet: m.alphabet.clone(),
                vocab: m.vocab.clone(),
                tensors,
            },
            Checkpoint::Word(m) => Header::Word { config: m.config.clone(), index: m.index.clone(), tensors },
        };
        let mut out = MAGIC.to_vec();
        out.extend(serde_json::to_vec(&header)?);
        out.push(b'\n');
        for t in self.params().tensors() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let rest = bytes
            .strip_prefix(MAGIC)
            .ok_or_else(|| Error::Checkpoint("missing HOTFLIP1 magic".into()))?;
        let newline = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Checkpoint("unterminated header".into()))?;
        let header: Header = serde_json::from_slice(&rest[..newline])?;
        let data = &rest[newline + 1..];
        let read = |entries: &[TensorEntry]| -> Result<ParamSet> {
            let mut names = Vec::new();
            let mut tensors = Vec::new();
            for e in entries {
                let len: usize = e.shape.iter().product();
                let end = e.offset + len * 8;
                let raw = data
                    .get(e.offset..end)
                    .ok_or_else(|| Error::Checkpoint(format!("tensor {} runs past end of file", e.name)))?;
                let values = raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                    .collect();
                names.push(e.name.clone());
                tensors.push(Tensor::new(e.shape.clone(), values)?);
            }
            Ok(ParamSet::from_parts(names, tensors))
        };
        match header {
            Header::Char { config, alphabet, vocab, tensors } => {
                let params = read(&tensors)?;
                Ok(Checkpoint::Char(CharModel::from_params(config, alphabet, vocab, params)?))
            }
            Header::Word { config, index, tensors } => {
                let params = read(&tensors)?;
                Ok(Checkpoint::Word(WordModel::from_params(config, index, params)?))
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn into_char(self) -> Result<CharModel> {
        match self {
            Checkpoint::Char(m) => Ok(m),
            Checkpoint::Word(_) => Err(Error::Checkpoint("expected a character-level model".into())),
        }
    }

    pub fn into_word(self) -> Result<WordModel> {
        match self {
            Checkpoint::Word(m) => Ok(m),
            Checkpoint::Char(_) => Err(Error::Checkpoint("expected a word-level model".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EncodeOptions;

    #[test]
    fn char_checkpoint_round_trips_bit_exact() {
        let config = CharModelConfig {
            encode: EncodeOptions { max_words: 3, max_chars: 6, lowercase: true },
            char_dim: 3,
            kernel_width: 2,
            kernels: 4,
            highway_layers: 1,
            hidden: 3,
            lstm_layers: 2,
            classes: 4,
        };
        let vocab: WordVocab = vec!["ab".to_string(), "ba".to_string()].into();
        let model = CharModel::new(config, Alphabet::from_chars("abc".chars()), vocab, 9).unwrap();
        let ck = Checkpoint::Char(model);
        let bytes = ck.to_bytes().unwrap();
        assert!(bytes.starts_with(MAGIC));
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn word_checkpoint_round_trips() {
        let index = WordIndex::new(["good".to_string(), "bad".to_string()]);
        let model = WordModel::new(WordModelConfig { dim: 4, widths: vec![1, 2], kernels: 3, classes: 2 }, index, None, 1).unwrap();
        let ck = Checkpoint::Word(model);
        let bytes = ck.to_bytes().unwrap();
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
    }

    #[test]
    fn bad_magic_rejected() {
        assert!(matches!(Checkpoint::from_bytes(b"NOTAFILE\n{}\n"), Err(Error::Checkpoint(_))));
    }
}
