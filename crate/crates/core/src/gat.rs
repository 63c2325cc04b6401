//! Edge-featured multi-head graph attention and the meta-path scheduler.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::autograd::{ParamId, ParamStore, Scalar, Tape, Var};
use crate::error::Error;
use crate::hetgraph::{DirectedEdges, Direction, GraphBatch, StateFamily};
use crate::nn::xavier;

/// Ordered layer steps, written as a string over `A`..`D` (e.g. `"ABCDA"`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MetaPathSchedule {
    pub steps: Vec<Direction>,
}

impl MetaPathSchedule {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl Default for MetaPathSchedule {
    fn default() -> Self {
        "ABCDA".parse().expect("valid schedule")
    }
}

impl FromStr for MetaPathSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let steps = s
            .trim()
            .chars()
            .map(|c| match c.to_ascii_uppercase() {
                'A' => Ok(Direction::A),
                'B' => Ok(Direction::B),
                'C' => Ok(Direction::C),
                'D' => Ok(Direction::D),
                other => Err(Error::Config(format!("schedule step {other:?} is not one of A, B, C, D"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if steps.is_empty() {
            return Err(Error::Config("empty meta-path schedule".into()));
        }
        Ok(Self { steps })
    }
}

impl fmt::Display for MetaPathSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.steps.iter().try_for_each(|d| write!(f, "{}", d.letter()))
    }
}

impl Serialize for MetaPathSchedule {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MetaPathSchedule {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Elu,
    Relu,
    Identity,
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "elu" => Ok(Self::Elu),
            "relu" => Ok(Self::Relu),
            "identity" => Ok(Self::Identity),
            _ => Err(Error::Config(format!("unknown activation {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatConfig {
    pub width: usize,
    pub heads: usize,
    pub edge_dim: usize,
    pub edge_features: usize,
    pub ffn_inner: usize,
    pub negative_slope: f64,
    pub activation: Activation,
}

impl GatConfig {
    pub fn head_width(&self) -> usize {
        self.width / self.heads
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.heads == 0 || self.width % self.heads != 0 {
            return Err(Error::Config(format!(
                "node width {} is not divisible into {} heads",
                self.width, self.heads
            )));
        }
        if self.edge_features == 0 || self.edge_dim == 0 || self.ffn_inner == 0 {
            return Err(Error::Config("graph attention sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Parameters of one attention step.
#[derive(Debug, Clone)]
pub struct GatLayer {
    pub config: GatConfig,
    pub target_proj: ParamId,
    pub source_proj: ParamId,
    pub value_proj: ParamId,
    /// Per-head attention weights on the projected target (`K x d`).
    pub att_target: ParamId,
    /// Per-head attention weights on the projected source (`K x d`).
    pub att_source: ParamId,
    /// Attention weights on the edge embedding, one column per head (`edge_dim x K`).
    pub att_edge: ParamId,
    pub edge_table: ParamId,
    pub ffn_in: ParamId,
    pub ffn_in_bias: ParamId,
    pub ffn_out: ParamId,
    pub ffn_out_bias: ParamId,
}

impl GatLayer {
    pub fn new<F: Scalar>(store: &mut ParamStore<F>, name: &str, config: GatConfig, rng: &mut impl Rng) -> Self {
        config.validate().expect("valid attention config");
        let (d, k, dh) = (config.width, config.heads, config.head_width());
        let mut add = |part: &str, value: Array2<F>| store.add(format!("{name}.{part}"), value);
        Self {
            target_proj: add("target_proj", xavier(rng, d, d)),
            source_proj: add("source_proj", xavier(rng, d, d)),
            value_proj: add("value_proj", xavier(rng, d, d)),
            att_target: add("att_target", xavier(rng, k, dh)),
            att_source: add("att_source", xavier(rng, k, dh)),
            att_edge: add("att_edge", xavier(rng, config.edge_dim, k)),
            edge_table: add("edge_embedding", xavier(rng, config.edge_features, config.edge_dim)),
            ffn_in: add("ffn_in", xavier(rng, d, config.ffn_inner)),
            ffn_in_bias: add("ffn_in_bias", Array2::zeros((1, config.ffn_inner))),
            ffn_out: add("ffn_out", xavier(rng, config.ffn_inner, d)),
            ffn_out_bias: add("ffn_out_bias", Array2::zeros((1, d))),
            config,
        }
    }

    /// Attention weights, one row per edge and one column per head. Each
    /// target's weights sum to one over its incoming edges.
    pub fn attention<F: Scalar>(&self, tape: &mut Tape<'_, F>, target: Var, source: Var, edges: &DirectedEdges) -> Var {
        let wt = tape.param(self.target_proj);
        let ws = tape.param(self.source_proj);
        let at = tape.param(self.att_target);
        let a_s = tape.param(self.att_source);
        let ae = tape.param(self.att_edge);
        let table = tape.param(self.edge_table);

        let zt = tape.matmul(target, wt);
        let st = tape.head_dot(zt, at);
        let zs = tape.matmul(source, ws);
        let ss = tape.head_dot(zs, a_s);
        let se = tape.matmul(table, ae);

        let st = tape.gather_rows(st, &edges.targets);
        let ss = tape.gather_rows(ss, &edges.sources);
        let se = tape.gather_rows(se, &edges.features);
        let raw = tape.add(st, ss);
        let raw = tape.add(raw, se);
        let raw = tape.leaky_relu(raw, F::of(self.config.negative_slope));
        tape.segment_softmax(raw, &edges.targets)
    }

    /// New target states. Targets without incoming edges keep their rows.
    pub fn update<F: Scalar>(&self, tape: &mut Tape<'_, F>, target: Var, source: Var, edges: &DirectedEdges) -> Var {
        if edges.is_empty() {
            return target;
        }
        let alpha = self.attention(tape, target, source, edges);
        let wv = tape.param(self.value_proj);
        let values = tape.matmul(source, wv);
        let values = tape.gather_rows(values, &edges.sources);
        let messages = tape.head_scale(values, alpha);
        let agg = tape.scatter_add_rows(messages, &edges.targets, edges.target_count);
        let agg = match self.config.activation {
            Activation::Elu => tape.elu(agg),
            Activation::Relu => tape.relu(agg),
            Activation::Identity => agg,
        };
        let h = tape.add(agg, target);

        let w1 = tape.param(self.ffn_in);
        let b1 = tape.param(self.ffn_in_bias);
        let w2 = tape.param(self.ffn_out);
        let b2 = tape.param(self.ffn_out_bias);
        let inner = tape.matmul(h, w1);
        let inner = tape.add_row(inner, b1);
        let inner = tape.relu(inner);
        let out = tape.matmul(inner, w2);
        let out = tape.add_row(out, b2);

        let mask = edges.has_incoming();
        if mask.iter().all(|&m| m) {
            out
        } else {
            tape.select_rows(&mask, out, target)
        }
    }
}

/// Utterance, basic, and type node states during message passing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeStates {
    pub utterances: Var,
    pub basic: Var,
    pub types: Var,
    /// Number of updates applied to each family.
    pub versions: [usize; 3],
}

impl NodeStates {
    pub fn new(utterances: Var, basic: Var, types: Var) -> Self {
        Self { utterances, basic, types, versions: [0; 3] }
    }

    pub fn get(&self, family: StateFamily) -> Var {
        match family {
            StateFamily::Utterance => self.utterances,
            StateFamily::Basic => self.basic,
            StateFamily::Type => self.types,
        }
    }

    fn set(&mut self, family: StateFamily, v: Var) {
        let (slot, k) = match family {
            StateFamily::Utterance => (&mut self.utterances, 0),
            StateFamily::Basic => (&mut self.basic, 1),
            StateFamily::Type => (&mut self.types, 2),
        };
        *slot = v;
        self.versions[k] += 1;
    }
}

/// Applies each step in order with its own layer. A step whose direction has
/// no edges leaves the states untouched.
pub fn run_schedule<F: Scalar>(
    tape: &mut Tape<'_, F>,
    graph: &GraphBatch,
    init: NodeStates,
    schedule: &MetaPathSchedule,
    layers: &[GatLayer],
) -> NodeStates {
    assert_eq!(layers.len(), schedule.len(), "one layer per schedule step");
    let mut states = init;
    for (step, (&dir, layer)) in schedule.steps.iter().zip(layers).enumerate() {
        let edges = graph.directed(dir);
        if edges.is_empty() {
            log::warn!("schedule step {} ({}) has no edges; skipped", step, dir.letter());
            continue;
        }
        let target = states.get(dir.target());
        let source = states.get(dir.source());
        let new = layer.update(tape, target, source, edges);
        states.set(dir.target(), new);
    }
    states
}
