//! Per-pair heterogeneous graph: utterance, word, speaker, argument, and type
//! nodes joined by five bipartite edge families.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::annotate::{AnnotatedDialogue, ArgumentSlot, PairLocation, SpeakerId, TypeId, POS_TAGS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeFamily {
    UtteranceWord,
    UtteranceArgument,
    UtteranceSpeaker,
    TypeWord,
    TypeArgument,
}

impl EdgeFamily {
    pub const ALL: [EdgeFamily; 5] = [
        EdgeFamily::UtteranceWord,
        EdgeFamily::UtteranceArgument,
        EdgeFamily::UtteranceSpeaker,
        EdgeFamily::TypeWord,
        EdgeFamily::TypeArgument,
    ];
}

/// Number of rows an edge-feature table needs for `pos_count` tags: one per
/// tag, one per non-POS family, and one shared utterance-word feature used
/// when POS edge features are switched off.
pub fn edge_feature_count(pos_count: usize) -> usize {
    pos_count + 5
}

/// Feature id of an edge. Utterance-word edges carry the POS id of the word's
/// first occurrence in the utterance; every other family has one id.
pub fn edge_feature_id(family: EdgeFamily, first_pos: Option<usize>, pos_count: usize, pos_features: bool) -> usize {
    match family {
        EdgeFamily::UtteranceWord => match first_pos {
            Some(p) if pos_features => p,
            _ => pos_count + 4,
        },
        EdgeFamily::UtteranceArgument => pos_count,
        EdgeFamily::UtteranceSpeaker => pos_count + 1,
        EdgeFamily::TypeWord => pos_count + 2,
        EdgeFamily::TypeArgument => pos_count + 3,
    }
}

/// One edge, endpoints given as indices into their family's node list.
/// `from` is the utterance or type end; `to` the word, speaker, or argument end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub family: EdgeFamily,
    pub from: usize,
    pub to: usize,
    pub feature: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphOptions {
    pub argument_nodes: bool,
    pub pos_edge_features: bool,
    /// Speaker embedding slots; later speakers share the last slot.
    pub speaker_slots: usize,
}

impl Default for GraphOptions {
    fn default() -> Self {
        Self { argument_nodes: true, pos_edge_features: true, speaker_slots: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeteroGraph {
    /// Turn index of each utterance node.
    pub utterances: Vec<usize>,
    /// Case-folded form of each word node, in order of first occurrence.
    pub words: Vec<String>,
    pub speakers: Vec<SpeakerId>,
    /// Embedding slot of each speaker node.
    pub speaker_slots: Vec<usize>,
    pub arguments: Vec<ArgumentSlot>,
    pub types: Vec<TypeId>,
    /// Sorted by family, then endpoints.
    pub edges: Vec<Edge>,
    /// Word nodes matched by each argument's textual mentions.
    pub argument_words: [Vec<usize>; 2],
    /// Speaker node of a speaker-valued argument.
    pub argument_speakers: [Option<usize>; 2],
}

/// Which node families a step reads from and writes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// utterance to basic
    A,
    /// basic to type
    B,
    /// type to basic
    C,
    /// basic to utterance
    D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateFamily {
    Utterance,
    Basic,
    Type,
}

impl Direction {
    pub fn source(self) -> StateFamily {
        match self {
            Direction::A => StateFamily::Utterance,
            Direction::B | Direction::D => StateFamily::Basic,
            Direction::C => StateFamily::Type,
        }
    }

    pub fn target(self) -> StateFamily {
        match self {
            Direction::A | Direction::C => StateFamily::Basic,
            Direction::B => StateFamily::Type,
            Direction::D => StateFamily::Utterance,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Direction::A => 'A',
            Direction::B => 'B',
            Direction::C => 'C',
            Direction::D => 'D',
        }
    }
}

/// Edges of one direction as parallel index lists, sorted by (target, source).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DirectedEdges {
    pub sources: Vec<usize>,
    pub targets: Vec<usize>,
    pub features: Vec<usize>,
    pub source_count: usize,
    pub target_count: usize,
}

impl DirectedEdges {
    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    /// Whether each target row has at least one incoming edge.
    pub fn has_incoming(&self) -> Vec<bool> {
        let mut out = vec![false; self.target_count];
        for &t in &self.targets {
            out[t] = true;
        }
        out
    }

    fn sort(&mut self) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by_key(|&i| (self.targets[i], self.sources[i], self.features[i]));
        self.sources = idx.iter().map(|&i| self.sources[i]).collect();
        self.targets = idx.iter().map(|&i| self.targets[i]).collect();
        self.features = idx.iter().map(|&i| self.features[i]).collect();
    }
}

impl HeteroGraph {
    pub fn utterance_count(&self) -> usize {
        self.utterances.len()
    }

    pub fn basic_count(&self) -> usize {
        self.words.len() + self.speakers.len() + self.arguments.len()
    }

    pub fn type_count(&self) -> usize {
        self.types.len()
    }

    pub fn word_basic(&self, word: usize) -> usize {
        word
    }

    pub fn speaker_basic(&self, speaker: usize) -> usize {
        self.words.len() + speaker
    }

    /// Basic-node index of an argument node, if argument nodes exist.
    pub fn argument_basic(&self, slot: ArgumentSlot) -> Option<usize> {
        self.arguments
            .iter()
            .position(|&s| s == slot)
            .map(|p| self.words.len() + self.speakers.len() + p)
    }

    pub fn edges_of(&self, family: EdgeFamily) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.family == family)
    }

    fn basic_of(&self, e: &Edge) -> usize {
        match e.family {
            EdgeFamily::UtteranceWord | EdgeFamily::TypeWord => self.word_basic(e.to),
            EdgeFamily::UtteranceSpeaker => self.speaker_basic(e.to),
            EdgeFamily::UtteranceArgument | EdgeFamily::TypeArgument => {
                self.words.len() + self.speakers.len() + e.to
            }
        }
    }

    pub fn directed(&self, dir: Direction) -> DirectedEdges {
        let from_utterance =
            [EdgeFamily::UtteranceWord, EdgeFamily::UtteranceSpeaker, EdgeFamily::UtteranceArgument];
        let from_type = [EdgeFamily::TypeWord, EdgeFamily::TypeArgument];
        let families: &[EdgeFamily] = match dir {
            Direction::A | Direction::D => &from_utterance,
            Direction::B | Direction::C => &from_type,
        };
        let (source_count, target_count) = match dir {
            Direction::A => (self.utterance_count(), self.basic_count()),
            Direction::B => (self.basic_count(), self.type_count()),
            Direction::C => (self.type_count(), self.basic_count()),
            Direction::D => (self.basic_count(), self.utterance_count()),
        };
        let mut out = DirectedEdges { source_count, target_count, ..Default::default() };
        for e in self.edges.iter().filter(|e| families.contains(&e.family)) {
            let basic = self.basic_of(e);
            let (s, t) = match dir {
                Direction::A | Direction::C => (e.from, basic),
                Direction::B | Direction::D => (basic, e.from),
            };
            out.sources.push(s);
            out.targets.push(t);
            out.features.push(e.feature);
        }
        out.sort();
        out
    }
}

/// Builds the graph of one argument pair over the first `turns` turns.
pub fn build_graph(
    annotated: &AnnotatedDialogue,
    location: &PairLocation,
    turns: usize,
    options: &GraphOptions,
) -> HeteroGraph {
    let pos_count = POS_TAGS.len();
    let turns = turns.min(annotated.utterances.len());
    let utts = &annotated.utterances[..turns];

    let mut words: Vec<String> = Vec::new();
    let mut word_index: HashMap<&str, usize> = HashMap::new();
    let mut word_types: Vec<BTreeSet<TypeId>> = Vec::new();
    let mut edges = Vec::new();
    for (u, utt) in utts.iter().enumerate() {
        let mut seen = BTreeSet::new();
        for tok in &utt.tokens {
            let w = *word_index.entry(tok.norm.as_str()).or_insert_with(|| {
                words.push(tok.norm.clone());
                word_types.push(BTreeSet::new());
                words.len() - 1
            });
            word_types[w].insert(tok.ner);
            if seen.insert(w) {
                let feature =
                    edge_feature_id(EdgeFamily::UtteranceWord, Some(tok.pos.0), pos_count, options.pos_edge_features);
                edges.push(Edge { family: EdgeFamily::UtteranceWord, from: u, to: w, feature });
            }
        }
    }

    let speakers: Vec<SpeakerId> =
        utts.iter().flat_map(|u| u.speaker_ids.iter().copied()).collect::<BTreeSet<_>>().into_iter().collect();
    let speaker_node = |id: SpeakerId| speakers.binary_search(&id).expect("speaker of a turn");
    for (u, utt) in utts.iter().enumerate() {
        for &s in &utt.speaker_ids {
            let feature = edge_feature_id(EdgeFamily::UtteranceSpeaker, None, pos_count, true);
            edges.push(Edge { family: EdgeFamily::UtteranceSpeaker, from: u, to: speaker_node(s), feature });
        }
    }

    let mut types: BTreeSet<TypeId> = word_types.iter().flatten().copied().collect();
    let mut argument_words: [Vec<usize>; 2] = Default::default();
    let mut argument_speakers = [None, None];
    let mut argument_types: [BTreeSet<TypeId>; 2] = Default::default();
    let mut argument_turns: [BTreeSet<usize>; 2] = Default::default();
    for slot in ArgumentSlot::BOTH {
        let loc = location.get(slot);
        let k = slot.index();
        for span in loc.spans.iter().filter(|s| s.utterance_index < turns) {
            argument_turns[k].insert(span.utterance_index);
            for tok in &utts[span.utterance_index].tokens[span.token_range()] {
                let w = word_index[tok.norm.as_str()];
                if !argument_words[k].contains(&w) {
                    argument_words[k].push(w);
                }
                argument_types[k].insert(tok.ner);
            }
        }
        argument_speakers[k] = loc.speaker.and_then(|s| speakers.binary_search(&s).ok());
        if argument_types[k].is_empty() {
            argument_types[k].insert(loc.corpus_type);
        }
    }

    let arguments: Vec<ArgumentSlot> =
        if options.argument_nodes { ArgumentSlot::BOTH.to_vec() } else { Vec::new() };
    if options.argument_nodes {
        for slot in ArgumentSlot::BOTH {
            types.extend(argument_types[slot.index()].iter().copied());
        }
    }
    let types: Vec<TypeId> = types.into_iter().collect();
    let type_node = |t: TypeId| types.binary_search(&t).expect("collected type");

    for (w, ts) in word_types.iter().enumerate() {
        for &t in ts {
            let feature = edge_feature_id(EdgeFamily::TypeWord, None, pos_count, true);
            edges.push(Edge { family: EdgeFamily::TypeWord, from: type_node(t), to: w, feature });
        }
    }
    for (a, slot) in arguments.iter().enumerate() {
        let k = slot.index();
        for &u in &argument_turns[k] {
            let feature = edge_feature_id(EdgeFamily::UtteranceArgument, None, pos_count, true);
            edges.push(Edge { family: EdgeFamily::UtteranceArgument, from: u, to: a, feature });
        }
        for &t in &argument_types[k] {
            let feature = edge_feature_id(EdgeFamily::TypeArgument, None, pos_count, true);
            edges.push(Edge { family: EdgeFamily::TypeArgument, from: type_node(t), to: a, feature });
        }
    }
    edges.sort();

    let speaker_slots = speakers.iter().map(|s| s.0.min(options.speaker_slots - 1)).collect();
    HeteroGraph {
        utterances: (0..turns).map(|u| utts[u].index).collect(),
        words,
        speakers,
        speaker_slots,
        arguments,
        types,
        edges,
        argument_words,
        argument_speakers,
    }
}

/// Several graphs laid side by side as one disconnected graph, so a group of
/// pairs from the same dialogue runs through each layer together.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub utterance_offsets: Vec<usize>,
    pub basic_offsets: Vec<usize>,
    pub type_offsets: Vec<usize>,
    pub utterance_count: usize,
    pub basic_count: usize,
    pub type_count: usize,
    directed: [DirectedEdges; 4],
}

impl GraphBatch {
    pub fn new(graphs: &[&HeteroGraph]) -> Self {
        let mut b = GraphBatch {
            utterance_offsets: Vec::new(),
            basic_offsets: Vec::new(),
            type_offsets: Vec::new(),
            utterance_count: 0,
            basic_count: 0,
            type_count: 0,
            directed: Default::default(),
        };
        for g in graphs {
            b.utterance_offsets.push(b.utterance_count);
            b.basic_offsets.push(b.basic_count);
            b.type_offsets.push(b.type_count);
            for (d, dir) in [Direction::A, Direction::B, Direction::C, Direction::D].into_iter().enumerate() {
                let e = g.directed(dir);
                let off = |f: StateFamily| match f {
                    StateFamily::Utterance => b.utterance_count,
                    StateFamily::Basic => b.basic_count,
                    StateFamily::Type => b.type_count,
                };
                let (so, to) = (off(dir.source()), off(dir.target()));
                let out = &mut b.directed[d];
                out.sources.extend(e.sources.iter().map(|s| s + so));
                out.targets.extend(e.targets.iter().map(|t| t + to));
                out.features.extend(e.features);
            }
            b.utterance_count += g.utterance_count();
            b.basic_count += g.basic_count();
            b.type_count += g.type_count();
        }
        for (d, dir) in [Direction::A, Direction::B, Direction::C, Direction::D].into_iter().enumerate() {
            let count = |f: StateFamily| match f {
                StateFamily::Utterance => b.utterance_count,
                StateFamily::Basic => b.basic_count,
                StateFamily::Type => b.type_count,
            };
            b.directed[d].source_count = count(dir.source());
            b.directed[d].target_count = count(dir.target());
        }
        b
    }

    pub fn directed(&self, dir: Direction) -> &DirectedEdges {
        &self.directed[dir as usize]
    }

    pub fn count(&self, family: StateFamily) -> usize {
        match family {
            StateFamily::Utterance => self.utterance_count,
            StateFamily::Basic => self.basic_count,
            StateFamily::Type => self.type_count,
        }
    }
}
