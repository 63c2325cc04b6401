//! Token embeddings, the per-turn BiLSTM, and the conversation-level BiLSTM.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{ParamId, ParamStore, Scalar, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{uniform, xavier, BiLstm, Packed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub word_dim: usize,
    pub pos_dim: usize,
    pub type_dim: usize,
    pub pos_count: usize,
    pub type_count: usize,
    pub local_hidden: usize,
    pub local_layers: usize,
    pub global_hidden: usize,
    pub global_layers: usize,
    pub dropout: f64,
    pub use_pos: bool,
    pub use_ner: bool,
    pub use_local: bool,
    pub use_global: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            word_dim: 300,
            pos_dim: 30,
            type_dim: 30,
            pos_count: crate::annotate::POS_TAGS.len(),
            type_count: crate::annotate::ENTITY_TYPES.len(),
            local_hidden: 200,
            local_layers: 2,
            global_hidden: 128,
            global_layers: 2,
            dropout: 0.3,
            use_pos: true,
            use_ner: true,
            use_local: true,
            use_global: true,
        }
    }
}

impl EncoderConfig {
    pub fn token_width(&self) -> usize {
        self.word_dim + if self.use_pos { self.pos_dim } else { 0 } + if self.use_ner { self.type_dim } else { 0 }
    }

    /// Width of the per-turn pooled vector.
    pub fn pooled_width(&self) -> usize {
        if self.use_local {
            2 * self.local_hidden
        } else {
            self.token_width()
        }
    }

    /// Width of the per-turn output.
    pub fn output_width(&self) -> usize {
        if self.use_global {
            2 * self.global_hidden
        } else {
            self.pooled_width()
        }
    }
}

/// Word, POS, and entity-type ids of one turn's tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenIds {
    pub words: Vec<usize>,
    pub pos: Vec<usize>,
    pub types: Vec<usize>,
}

impl TokenIds {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct UtteranceEncoding {
    pub token_states: Packed,
    pub pooled: Var,
    pub global_states: Var,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub word_table: ParamId,
    pub pos_table: Option<ParamId>,
    pub type_table: Option<ParamId>,
    pub pad: ParamId,
    pub local: Option<BiLstm>,
    pub global: Option<BiLstm>,
}

impl Encoder {
    pub fn new<F: Scalar>(
        store: &mut ParamStore<F>,
        config: EncoderConfig,
        word_table: Array2<F>,
        rng: &mut impl Rng,
    ) -> Self {
        assert_eq!(word_table.ncols(), config.word_dim);
        let word_table = store.add("encoder.word_embedding", word_table);
        let pos_table =
            config.use_pos.then(|| store.add("encoder.pos_embedding", xavier(rng, config.pos_count, config.pos_dim)));
        let type_table = config
            .use_ner
            .then(|| store.add("encoder.type_embedding", xavier(rng, config.type_count, config.type_dim)));
        let pad = store.add("encoder.pad_token", uniform(rng, 1, config.token_width(), 0.05));
        let local = config.use_local.then(|| {
            BiLstm::new(
                store,
                "encoder.local",
                config.token_width(),
                config.local_hidden,
                config.local_layers,
                config.dropout,
                rng,
            )
        });
        let global = config.use_global.then(|| {
            BiLstm::new(
                store,
                "encoder.global",
                config.pooled_width(),
                config.global_hidden,
                config.global_layers,
                config.dropout,
                rng,
            )
        });
        Self { config, word_table, pos_table, type_table, pad, local, global }
    }

    /// `[word; pos; type]` rows for every token, turns stacked in order.
    /// An empty turn becomes a single learned padding row.
    pub fn embed_tokens<F: Scalar>(&self, tape: &mut Tape<'_, F>, turns: &[TokenIds]) -> Result<Packed> {
        let words_n = tape.params().get(self.word_table).nrows();
        let mut words = Vec::new();
        let mut pos = Vec::new();
        let mut types = Vec::new();
        for t in turns {
            if t.pos.len() != t.len() || t.types.len() != t.len() {
                return Err(Error::Vocabulary("token id lists of unequal length".into()));
            }
            words.extend_from_slice(&t.words);
            pos.extend_from_slice(&t.pos);
            types.extend_from_slice(&t.types);
        }
        if let Some(&w) = words.iter().find(|&&w| w >= words_n) {
            return Err(Error::Vocabulary(format!("word id {w} outside a table of {words_n}")));
        }
        if let Some(&p) = pos.iter().find(|&&p| p >= self.config.pos_count) {
            return Err(Error::Vocabulary(format!("POS id {p} outside the tag set")));
        }
        if let Some(&t) = types.iter().find(|&&t| t >= self.config.type_count) {
            return Err(Error::Vocabulary(format!("type id {t} outside the type set")));
        }

        let mut parts = Vec::with_capacity(3);
        let wt = tape.param(self.word_table);
        parts.push(tape.gather_rows(wt, &words));
        if let Some(id) = self.pos_table {
            let table = tape.param(id);
            parts.push(tape.gather_rows(table, &pos));
        }
        if let Some(id) = self.type_table {
            let table = tape.param(id);
            parts.push(tape.gather_rows(table, &types));
        }
        let tokens = if parts.len() == 1 { parts[0] } else { tape.concat_cols(&parts) };

        let lengths: Vec<usize> = turns.iter().map(|t| t.len().max(1)).collect();
        if turns.iter().all(|t| !t.is_empty()) {
            return Ok(Packed { data: tokens, lengths });
        }
        let pad = tape.param(self.pad);
        let n_tokens = words.len();
        let with_pad = if n_tokens == 0 { pad } else { tape.concat_rows(&[tokens, pad]) };
        let mut rows = Vec::with_capacity(lengths.iter().sum());
        let mut next = 0;
        for t in turns {
            if t.is_empty() {
                rows.push(n_tokens);
            } else {
                rows.extend(next..next + t.len());
                next += t.len();
            }
        }
        let data = tape.gather_rows(with_pad, &rows);
        Ok(Packed { data, lengths })
    }

    /// Contextual token states and their per-turn max pool.
    pub fn encode_local<F: Scalar>(
        &self,
        tape: &mut Tape<'_, F>,
        embedded: &Packed,
        rng: Option<&mut ChaCha8Rng>,
    ) -> (Packed, Var) {
        let states = match &self.local {
            Some(lstm) => lstm.forward(tape, embedded, rng),
            None => embedded.clone(),
        };
        let pooled = states.max_pool(tape);
        (states, pooled)
    }

    /// Conversation-level states, one row per turn.
    pub fn encode_global<F: Scalar>(&self, tape: &mut Tape<'_, F>, pooled: Var, rng: Option<&mut ChaCha8Rng>) -> Var {
        match &self.global {
            Some(lstm) => {
                let n = tape.shape(pooled).0;
                lstm.forward(tape, &Packed { data: pooled, lengths: vec![n] }, rng).data
            }
            None => pooled,
        }
    }

    pub fn encode<F: Scalar>(
        &self,
        tape: &mut Tape<'_, F>,
        turns: &[TokenIds],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<UtteranceEncoding> {
        if turns.is_empty() {
            return Err(Error::EmptyInput("dialogue without turns"));
        }
        let embedded = self.embed_tokens(tape, turns)?;
        let (token_states, pooled) = self.encode_local(tape, &embedded, rng.as_deref_mut());
        let global_states = self.encode_global(tape, pooled, rng);
        Ok(UtteranceEncoding { token_states, pooled, global_states })
    }
}
