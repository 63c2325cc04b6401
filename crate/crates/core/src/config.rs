//! Flat key-value run configuration (TOML syntax) with override support.
//!
//! Precedence is explicit overrides, then the file, then defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::gat::{Activation, MetaPathSchedule};
use crate::hetgraph::GraphOptions;
use crate::model::ModelConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub schedule: MetaPathSchedule,
    pub width: usize,
    pub heads: usize,
    pub edge_dim: usize,
    pub ffn_multiplier: usize,
    pub negative_slope: f64,
    pub activation: Activation,
    pub word_dim: usize,
    pub pos_dim: usize,
    pub type_dim: usize,
    pub local_hidden: usize,
    pub local_layers: usize,
    pub global_hidden: usize,
    pub global_layers: usize,
    pub dropout: f64,
    pub speaker_slots: usize,
    pub no_local_lstm: bool,
    pub no_global_lstm: bool,
    pub no_argument_nodes: bool,
    pub no_pos_embedding: bool,
    pub no_ner_embedding: bool,
    pub no_pos_edge_features: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        let e = &m.encoder;
        Self {
            seed: 1,
            learning_rate: 5e-4,
            batch_size: 16,
            epochs: 50,
            patience: 10,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            schedule: m.schedule.clone(),
            width: m.width,
            heads: m.heads,
            edge_dim: m.edge_dim,
            ffn_multiplier: m.ffn_multiplier,
            negative_slope: m.negative_slope,
            activation: m.activation,
            word_dim: e.word_dim,
            pos_dim: e.pos_dim,
            type_dim: e.type_dim,
            local_hidden: e.local_hidden,
            local_layers: e.local_layers,
            global_hidden: e.global_hidden,
            global_layers: e.global_layers,
            dropout: e.dropout,
            speaker_slots: m.graph.speaker_slots,
            no_local_lstm: false,
            no_global_lstm: false,
            no_argument_nodes: false,
            no_pos_embedding: false,
            no_ner_embedding: false,
            no_pos_edge_features: false,
        }
    }
}

impl TrainConfig {
    pub fn model_config(&self, labels: usize) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                word_dim: self.word_dim,
                pos_dim: self.pos_dim,
                type_dim: self.type_dim,
                local_hidden: self.local_hidden,
                local_layers: self.local_layers,
                global_hidden: self.global_hidden,
                global_layers: self.global_layers,
                dropout: self.dropout,
                use_pos: !self.no_pos_embedding,
                use_ner: !self.no_ner_embedding,
                use_local: !self.no_local_lstm,
                use_global: !self.no_global_lstm,
                ..EncoderConfig::default()
            },
            width: self.width,
            heads: self.heads,
            edge_dim: self.edge_dim,
            ffn_multiplier: self.ffn_multiplier,
            negative_slope: self.negative_slope,
            activation: self.activation,
            schedule: self.schedule.clone(),
            graph: GraphOptions {
                argument_nodes: !self.no_argument_nodes,
                pos_edge_features: !self.no_pos_edge_features,
                speaker_slots: self.speaker_slots,
            },
            labels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        self.model_config(1).validate()
    }
}

/// Everything a CLI run reads: training settings plus paths and backend.
/// Empty strings mean "unset".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Directory holding train.json, dev.json, test.json.
    pub data_dir: String,
    /// Pretrained word vectors in text format.
    pub vectors: String,
    pub cache_dir: String,
    pub output_dir: String,
    /// Checkpoint to evaluate or predict with.
    pub checkpoint: String,
    /// `rule` or `external`.
    pub backend: String,
    /// Command line of an external annotator (used when backend = external).
    pub annotator_command: String,
    /// Worker threads for preprocess and eval; 0 picks the machine default.
    pub workers: usize,
    #[serde(flatten)]
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_dir: "data".into(),
            vectors: String::new(),
            cache_dir: "cache".into(),
            output_dir: "runs".into(),
            checkpoint: String::new(),
            backend: "rule".into(),
            annotator_command: "python3 scripts/spacy_annotator.py".into(),
            workers: 0,
            train: TrainConfig::default(),
        }
    }
}

fn known_keys() -> Vec<String> {
    match toml::Value::try_from(RunConfig::default()) {
        Ok(toml::Value::Table(t)) => t.keys().cloned().collect(),
        _ => unreachable!("config serializes to a table"),
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::Config(format!("config file: {e}")))?;
        Self::default().merged(table.into_iter())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Applies `key=value` overrides. Values use TOML syntax; bare words are strings.
    pub fn with_overrides<'a>(&self, overrides: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut pairs = Vec::new();
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            pairs.push((k.trim().to_string(), parse_value(v.trim())));
        }
        self.merged(pairs.into_iter())
    }

    fn merged(&self, entries: impl Iterator<Item = (String, toml::Value)>) -> Result<Self> {
        let known = known_keys();
        let mut table = match toml::Value::try_from(self) {
            Ok(toml::Value::Table(t)) => t,
            _ => unreachable!("config serializes to a table"),
        };
        for (k, v) in entries {
            if !known.contains(&k) {
                return Err(Error::Config(format!("unknown config key {k:?}")));
            }
            // integers are accepted where floats are expected
            let v = match (&table.get(&k), v) {
                (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
                (_, v) => v,
            };
            table.insert(k, v);
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    /// The effective configuration as flat TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
