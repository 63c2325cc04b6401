//! Word vocabulary and pretrained vector loading.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";

/// Closed word vocabulary. Index 0 is padding, index 1 the unknown word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct WordVocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for WordVocab {
    fn from(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { words, index }
    }
}

impl From<WordVocab> for Vec<String> {
    fn from(v: WordVocab) -> Self {
        v.words
    }
}

impl Default for WordVocab {
    fn default() -> Self {
        Self::from(vec![PAD.to_string(), UNK.to_string()])
    }
}

impl WordVocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a word if absent and returns its id.
    pub fn insert(&mut self, word: &str) -> usize {
        if let Some(&i) = self.index.get(word) {
            return i;
        }
        self.words.push(word.to_string());
        self.index.insert(word.to_string(), self.words.len() - 1);
        self.words.len() - 1
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Id of `word`, or the unknown id.
    pub fn id(&self, word: &str) -> usize {
        self.get(word).unwrap_or(1)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Training words plus any other word that has a pretrained vector, so
    /// evaluation words with known vectors are not collapsed to `<unk>`.
    pub fn build<'a>(
        train: impl IntoIterator<Item = &'a str>,
        others: impl IntoIterator<Item = &'a str>,
        pretrained: Option<&PretrainedVectors>,
    ) -> Self {
        let mut v = Self::new();
        for w in train {
            v.insert(w);
        }
        if let Some(p) = pretrained {
            for w in others {
                if p.get(w).is_some() {
                    v.insert(w);
                }
            }
        }
        v
    }
}

/// Vectors read from a whitespace-separated text file (`token v1 v2 ...`).
#[derive(Debug, Clone, Default)]
pub struct PretrainedVectors {
    dim: usize,
    vectors: HashMap<String, Vec<f32>>,
}

impl PretrainedVectors {
    pub fn new(dim: usize) -> Self {
        Self { dim, vectors: HashMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    pub fn insert(&mut self, word: &str, vector: Vec<f32>) {
        assert_eq!(vector.len(), self.dim);
        self.vectors.insert(word.to_string(), vector);
    }

    /// Streams `path`, keeping only words in `keep` (all words when `None`).
    /// Keys are lowercased; an exact lowercase entry wins over a cased one.
    /// A leading `count dim` header line is skipped.
    pub fn load(path: &Path, dim: usize, keep: Option<&HashSet<String>>) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), dim, keep)
    }

    pub fn read(reader: impl BufRead, dim: usize, keep: Option<&HashSet<String>>) -> Result<Self> {
        let mut out = Self::new(dim);
        let mut exact: HashSet<String> = HashSet::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Data(format!("vector file line {}: {e}", lineno + 1)))?;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(' ').collect();
            if fields.len() < dim + 1 {
                if lineno == 0 && fields.len() == 2 {
                    continue;
                }
                return Err(Error::Data(format!(
                    "vector file line {}: expected {} values, found {}",
                    lineno + 1,
                    dim,
                    fields.len().saturating_sub(1)
                )));
            }
            // tokens may themselves contain spaces; the last `dim` fields are numbers
            let split = fields.len() - dim;
            let token = fields[..split].join(" ");
            let key = token.to_lowercase();
            if keep.is_some_and(|k| !k.contains(&key)) {
                continue;
            }
            let is_exact = key == token;
            if out.vectors.contains_key(&key) && (exact.contains(&key) || !is_exact) {
                continue;
            }
            let values = fields[split..]
                .iter()
                .map(|f| f.parse::<f32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Data(format!("vector file line {}: {e}", lineno + 1)))?;
            if is_exact {
                exact.insert(key.clone());
            }
            out.vectors.insert(key, values);
        }
        Ok(out)
    }
}

/// Deterministic uniform(-0.05, 0.05) vector keyed by the token string.
pub fn oov_vector(token: &str, dim: usize) -> Vec<f32> {
    let digest = Sha256::digest(token.as_bytes());
    let mut seed = [0u8; 8];
    seed.copy_from_slice(&digest[..8]);
    let mut rng = ChaCha8Rng::seed_from_u64(u64::from_le_bytes(seed));
    (0..dim).map(|_| rng.gen_range(-0.05f32..0.05)).collect()
}

/// Initial word table: pretrained rows where available, hashed draws otherwise,
/// zeros for padding.
pub fn init_word_table(vocab: &WordVocab, pretrained: Option<&PretrainedVectors>, dim: usize) -> Array2<f32> {
    let mut table = Array2::zeros((vocab.len(), dim));
    for (i, w) in vocab.words().iter().enumerate() {
        if w == PAD {
            continue;
        }
        let row = match pretrained.and_then(|p| p.get(w)) {
            Some(v) => v.to_vec(),
            None => oov_vector(w, dim),
        };
        table.row_mut(i).assign(&ndarray::ArrayView1::from(&row[..]));
    }
    table
}
