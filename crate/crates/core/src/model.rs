//! The full relation classifier: encoder, graph construction, scheduled
//! attention, argument pooling, and a sigmoid output layer.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotate::{locate_arguments, AnnotatedDialogue, ArgumentSlot, ENTITY_TYPES, POS_TAGS};
use crate::autograd::{logistic, ParamId, ParamStore, Scalar, Tape, Var};
use crate::corpus::{RelationId, RelationInstance};
use crate::encoder::{Encoder, EncoderConfig, TokenIds};
use crate::error::{Error, Result};
use crate::gat::{run_schedule, Activation, GatConfig, GatLayer, MetaPathSchedule, NodeStates};
use crate::hetgraph::{build_graph, edge_feature_count, GraphBatch, GraphOptions, HeteroGraph};
use crate::nn::{xavier, Linear};
use crate::vectors::WordVocab;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// Common node width shared by every family.
    pub width: usize,
    pub heads: usize,
    pub edge_dim: usize,
    pub ffn_multiplier: usize,
    pub negative_slope: f64,
    pub activation: Activation,
    pub schedule: MetaPathSchedule,
    pub graph: GraphOptions,
    pub labels: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            width: 200,
            heads: 10,
            edge_dim: 50,
            ffn_multiplier: 2,
            negative_slope: 0.2,
            activation: Activation::Elu,
            schedule: MetaPathSchedule::default(),
            graph: GraphOptions::default(),
            labels: crate::corpus::DIALOGRE_RELATIONS.len(),
        }
    }
}

impl ModelConfig {
    pub fn gat(&self) -> GatConfig {
        GatConfig {
            width: self.width,
            heads: self.heads,
            edge_dim: self.edge_dim,
            edge_features: edge_feature_count(POS_TAGS.len()),
            ffn_inner: self.ffn_multiplier * self.width,
            negative_slope: self.negative_slope,
            activation: self.activation,
        }
    }

    pub fn pair_width(&self) -> usize {
        4 * self.width
    }

    pub fn validate(&self) -> Result<()> {
        self.gat().validate()?;
        if self.labels == 0 {
            return Err(Error::Config("empty label space".into()));
        }
        if self.graph.speaker_slots == 0 {
            return Err(Error::Config("speaker_slots must be positive".into()));
        }
        Ok(())
    }
}

/// Output of the classifier for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub labels: Vec<RelationId>,
}

impl Prediction {
    /// Labels with probability at least 0.5, or the single most probable label.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        if let Some(i) = logits.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("non-finite logit at label {i}")));
        }
        let probabilities: Vec<f64> = logits.iter().map(|&z| logistic(z)).collect();
        let mut labels: Vec<RelationId> =
            (0..logits.len()).filter(|&i| probabilities[i] >= 0.5).map(RelationId).collect();
        if labels.is_empty() && !logits.is_empty() {
            let best = (0..logits.len()).fold(0, |b, i| if logits[i] > logits[b] { i } else { b });
            labels.push(RelationId(best));
        }
        Ok(Self { probabilities, labels })
    }

    /// Label ids sorted by decreasing probability.
    pub fn ranked(&self) -> Vec<(RelationId, f64)> {
        let mut r: Vec<(RelationId, f64)> =
            self.probabilities.iter().enumerate().map(|(i, &p)| (RelationId(i), p)).collect();
        r.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        r
    }
}

/// Mean binary cross-entropy of probabilities against a multi-hot target.
pub fn bce_loss(probabilities: &[f64], gold: &[bool]) -> f64 {
    assert_eq!(probabilities.len(), gold.len());
    let term = |p: f64, y: bool| {
        let q = if y { p } else { 1.0 - p };
        if q == 1.0 {
            0.0
        } else {
            -q.ln()
        }
    };
    probabilities.iter().zip(gold).map(|(&p, &y)| term(p, y)).sum::<f64>() / gold.len() as f64
}

/// Multi-hot gold rows for a set of instances.
pub fn gold_matrix<F: Scalar>(instances: &[&RelationInstance], labels: usize) -> Array2<F> {
    let mut m = Array2::zeros((instances.len(), labels));
    for (r, inst) in instances.iter().enumerate() {
        for id in &inst.relation_labels {
            m[[r, id.0]] = F::one();
        }
    }
    m
}

/// Word, POS, and type ids of the first `turns` turns.
pub fn token_ids(annotated: &AnnotatedDialogue, vocab: &WordVocab, turns: usize) -> Vec<TokenIds> {
    annotated
        .utterances
        .iter()
        .take(turns)
        .map(|u| TokenIds {
            words: u.tokens.iter().map(|t| vocab.id(&t.norm)).collect(),
            pos: u.tokens.iter().map(|t| t.pos.0).collect(),
            types: u.tokens.iter().map(|t| t.ner.0).collect(),
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: WordVocab,
    pub encoder: Encoder,
    pub utterance_proj: Linear,
    pub word_proj: Linear,
    pub speaker_table: ParamId,
    pub argument_table: Option<ParamId>,
    pub type_table: ParamId,
    pub layers: Vec<GatLayer>,
    pub classifier: Linear,
}

/// Logits of a group of pairs and the graphs they were computed on.
#[derive(Debug)]
pub struct GroupOutput {
    pub logits: Var,
    pub graphs: Vec<HeteroGraph>,
}

impl Model {
    pub fn new<F: Scalar>(
        store: &mut ParamStore<F>,
        config: ModelConfig,
        vocab: WordVocab,
        word_table: Array2<F>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        if word_table.dim() != (vocab.len(), config.encoder.word_dim) {
            return Err(Error::Config(format!(
                "word table is {:?}, vocabulary needs {:?}",
                word_table.dim(),
                (vocab.len(), config.encoder.word_dim)
            )));
        }
        let d = config.width;
        let encoder = Encoder::new(store, config.encoder.clone(), word_table, rng);
        let utterance_proj = Linear::new(store, "utterance_proj", config.encoder.output_width(), d, true, rng);
        let word_proj = Linear::new(store, "word_proj", config.encoder.word_dim, d, true, rng);
        let speaker_table = store.add("speaker_embedding", xavier(rng, config.graph.speaker_slots, d));
        let argument_table =
            config.graph.argument_nodes.then(|| store.add("argument_embedding", xavier(rng, 2, d)));
        let type_table = store.add("type_node_embedding", xavier(rng, ENTITY_TYPES.len(), d));
        let gat = config.gat();
        let layers = config
            .schedule
            .steps
            .iter()
            .enumerate()
            .map(|(i, dir)| GatLayer::new(store, &format!("gat.{i}{}", dir.letter()), gat.clone(), rng))
            .collect();
        let classifier = Linear::new(store, "classifier", config.pair_width(), config.labels, true, rng);
        Ok(Self {
            config,
            vocab,
            encoder,
            utterance_proj,
            word_proj,
            speaker_table,
            argument_table,
            type_table,
            layers,
            classifier,
        })
    }

    /// Logits for `pairs` of one dialogue, all seen through its first `turns` turns.
    pub fn forward_group<F: Scalar>(
        &self,
        tape: &mut Tape<'_, F>,
        annotated: &AnnotatedDialogue,
        pairs: &[usize],
        turns: usize,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<GroupOutput> {
        let turns = turns.min(annotated.utterances.len());
        let ids = token_ids(annotated, &self.vocab, turns);
        let enc = self.encoder.encode(tape, &ids, rng.as_deref_mut())?;
        let h_u = self.utterance_proj.forward(tape, enc.global_states);

        let graphs: Vec<HeteroGraph> = pairs
            .iter()
            .map(|&p| build_graph(annotated, &locate_arguments(annotated, p, turns), turns, &self.config.graph))
            .collect();
        let refs: Vec<&HeteroGraph> = graphs.iter().collect();
        let batch = GraphBatch::new(&refs);
        let init = self.initial_states(tape, &graphs, h_u);
        let states = run_schedule(tape, &batch, init, &self.config.schedule, &self.layers);
        let features = self.pool_pair_features(tape, &graphs, &batch, states.basic);
        let logits = self.classifier.forward(tape, features);
        Ok(GroupOutput { logits, graphs })
    }

    /// Utterance rows from the encoder; word rows from the shared word table;
    /// speaker, argument, and type rows from their own tables.
    pub fn initial_states<F: Scalar>(&self, tape: &mut Tape<'_, F>, graphs: &[HeteroGraph], h_u: Var) -> NodeStates {
        let utt_rows: Vec<usize> = graphs.iter().flat_map(|g| 0..g.utterance_count()).collect();
        let utterances = tape.gather_rows(h_u, &utt_rows);

        let word_ids: Vec<usize> = graphs.iter().flat_map(|g| g.words.iter().map(|w| self.vocab.id(w))).collect();
        let slots: Vec<usize> = graphs.iter().flat_map(|g| g.speaker_slots.iter().copied()).collect();
        let args: Vec<usize> = graphs.iter().flat_map(|g| g.arguments.iter().map(|a| a.index())).collect();
        let (nw, ns) = (word_ids.len(), slots.len());

        let mut parts = Vec::new();
        if nw > 0 {
            let table = tape.param(self.encoder.word_table);
            let rows = tape.gather_rows(table, &word_ids);
            parts.push(self.word_proj.forward(tape, rows));
        }
        if ns > 0 {
            let table = tape.param(self.speaker_table);
            parts.push(tape.gather_rows(table, &slots));
        }
        if let (Some(id), false) = (self.argument_table, args.is_empty()) {
            let table = tape.param(id);
            parts.push(tape.gather_rows(table, &args));
        }
        let basic = match parts.len() {
            0 => tape.zeros(0, self.config.width),
            _ => {
                let stacked = if parts.len() == 1 { parts[0] } else { tape.concat_rows(&parts) };
                // reorder from [all words; all speakers; all arguments] to per-graph blocks
                let (mut w, mut s, mut a) = (0, nw, nw + ns);
                let mut order = Vec::with_capacity(nw + ns + args.len());
                for g in graphs {
                    order.extend(w..w + g.words.len());
                    order.extend(s..s + g.speakers.len());
                    order.extend(a..a + g.arguments.len());
                    w += g.words.len();
                    s += g.speakers.len();
                    a += g.arguments.len();
                }
                tape.gather_rows(stacked, &order)
            }
        };

        let type_ids: Vec<usize> = graphs.iter().flat_map(|g| g.types.iter().map(|t| t.0)).collect();
        let table = tape.param(self.type_table);
        let types = tape.gather_rows(table, &type_ids);
        NodeStates::new(utterances, basic, types)
    }

    /// `[argument x; pooled words of x; argument y; pooled words of y]` per pair.
    /// A speaker-valued argument pools its speaker node; an unlocated one
    /// contributes zeros, as do argument nodes when they are disabled.
    pub fn pool_pair_features<F: Scalar>(
        &self,
        tape: &mut Tape<'_, F>,
        graphs: &[HeteroGraph],
        batch: &GraphBatch,
        basic: Var,
    ) -> Var {
        let d = self.config.width;
        let mut rows = Vec::with_capacity(graphs.len());
        for (g, graph) in graphs.iter().enumerate() {
            let off = batch.basic_offsets[g];
            let mut parts = Vec::with_capacity(4);
            for slot in ArgumentSlot::BOTH {
                let k = slot.index();
                let tau = match graph.argument_basic(slot) {
                    Some(b) => tape.gather_rows(basic, &[off + b]),
                    None => tape.zeros(1, d),
                };
                let members: Vec<usize> = match graph.argument_speakers[k] {
                    Some(s) => vec![off + graph.speaker_basic(s)],
                    None => graph.argument_words[k].iter().map(|&w| off + graph.word_basic(w)).collect(),
                };
                let pooled = if members.is_empty() {
                    tape.zeros(1, d)
                } else {
                    let m = tape.gather_rows(basic, &members);
                    if members.len() == 1 {
                        m
                    } else {
                        tape.max_rows(m)
                    }
                };
                parts.push(tau);
                parts.push(pooled);
            }
            rows.push(tape.concat_cols(&parts));
        }
        tape.concat_rows(&rows)
    }

    /// Trainable parameter counts grouped by top-level component.
    pub fn parameter_report<F: Scalar>(&self, store: &ParamStore<F>) -> ParamReport {
        let mut groups: BTreeMap<String, usize> = BTreeMap::new();
        let mut total = 0;
        let mut word_table = 0;
        for (id, name, value) in store.iter() {
            total += value.len();
            if id == self.encoder.word_table {
                word_table = value.len();
                continue;
            }
            let mut key: Vec<&str> = name.split('.').collect();
            key.truncate(if key[0] == "encoder" || key[0] == "gat" { 2 } else { 1 });
            *groups.entry(key.join(".")).or_default() += value.len();
        }
        ParamReport { total, word_table, groups: groups.into_iter().collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamReport {
    pub total: usize,
    pub word_table: usize,
    pub groups: Vec<(String, usize)>,
}

impl ParamReport {
    /// Parameters excluding the vocabulary-sized word table.
    pub fn model(&self) -> usize {
        self.total - self.word_table
    }
}

impl std::fmt::Display for ParamReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (name, n) in &self.groups {
            writeln!(f, "{name:<28}{n:>12}")?;
        }
        writeln!(f, "{:<28}{:>12}", "model (excl. word table)", self.model())?;
        writeln!(f, "{:<28}{:>12}", "word table", self.word_table)?;
        write!(f, "{:<28}{:>12}", "total", self.total)
    }
}
