//! Single-file checkpoints.
//!
//! Layout: the 8 magic bytes `HGATCKPT`, a little-endian `u32` format version,
//! a little-endian `u64` header length, the JSON header, then every tensor as
//! little-endian `f32` in header order. The header holds the training and
//! model configuration, the word and relation vocabularies, and a tensor index
//! (name, shape, element offset).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::ParamStore;
use crate::config::TrainConfig;
use crate::corpus::RelationVocabulary;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::vectors::WordVocab;

const MAGIC: &[u8; 8] = b"HGATCKPT";
const VERSION: u32 = 1;

/// A model with its parameters and the settings it was trained under.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub config: TrainConfig,
    pub labels: RelationVocabulary,
    pub model: Model,
    pub params: ParamStore<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    train_config: TrainConfig,
    model_config: ModelConfig,
    vocab: WordVocab,
    labels: Vec<String>,
    tensors: Vec<TensorEntry>,
}

fn corrupt(what: impl std::fmt::Display) -> Error {
    Error::Checkpoint(what.to_string())
}

impl TrainedModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut offset = 0;
        let tensors = self
            .params
            .iter()
            .map(|(_, name, v)| {
                let e = TensorEntry { name: name.to_string(), shape: [v.nrows(), v.ncols()], offset };
                offset += v.len();
                e
            })
            .collect();
        let header = Header {
            train_config: self.config.clone(),
            model_config: self.model.config.clone(),
            vocab: self.model.vocab.clone(),
            labels: self.labels.labels().to_vec(),
            tensors,
        };
        let json = serde_json::to_vec(&header).map_err(corrupt)?;
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
            out.write_all(MAGIC)?;
            out.write_all(&VERSION.to_le_bytes())?;
            out.write_all(&(json.len() as u64).to_le_bytes())?;
            out.write_all(&json)?;
            for (_, _, v) in self.params.iter() {
                for x in v.iter() {
                    out.write_all(&x.to_le_bytes())?;
                }
            }
            out.flush()
        };
        write(&mut out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut input = BufReader::new(file);
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic).map_err(|_| corrupt("file too short"))?;
        if &magic != MAGIC {
            return Err(corrupt("not a checkpoint file"));
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word).map_err(corrupt)?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(corrupt(format!("unsupported checkpoint version {version}")));
        }
        let mut len = [0u8; 8];
        input.read_exact(&mut len).map_err(corrupt)?;
        let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
        input.read_exact(&mut json).map_err(corrupt)?;
        let header: Header = serde_json::from_slice(&json).map_err(corrupt)?;

        let labels = RelationVocabulary::from_labels(header.labels)?;
        let mut params = ParamStore::<f32>::new();
        let word_table = Array2::zeros((header.vocab.len(), header.model_config.encoder.word_dim));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = Model::new(&mut params, header.model_config, header.vocab, word_table, &mut rng)?;
        if header.tensors.len() != params.len() {
            return Err(corrupt(format!(
                "checkpoint holds {} tensors, the model has {}",
                header.tensors.len(),
                params.len()
            )));
        }
        let mut seen = vec![false; params.len()];
        let mut buf = [0u8; 4];
        for entry in &header.tensors {
            let id = params.lookup(&entry.name).ok_or_else(|| corrupt(format!("unexpected tensor {}", entry.name)))?;
            let target = params.get_mut(id);
            if target.dim() != (entry.shape[0], entry.shape[1]) {
                return Err(corrupt(format!(
                    "tensor {} has shape {:?}, the model expects {:?}",
                    entry.name,
                    entry.shape,
                    target.dim()
                )));
            }
            for x in target.iter_mut() {
                input.read_exact(&mut buf).map_err(|_| corrupt("tensor data truncated"))?;
                *x = f32::from_le_bytes(buf);
            }
            seen[id.0] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(corrupt("checkpoint is missing tensors"));
        }
        Ok(Self { config: header.train_config, labels, model, params })
    }
}
