//! DialogRE corpus model, loader, and dataset statistics.
//!
//! The on-disk format is a JSON list of `[turns, relations]` pairs, where each
//! turn reads `"Speaker k: <text>"` and each relation object carries
//! `x`, `y`, `r`, `rid`, `t`, `x_type`, `y_type`.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotate::{resolve_speakers, Annotator};
use crate::error::{Error, Result};

/// Relation labels in DialogRE id order (`rid` 1..=37).
pub const DIALOGRE_RELATIONS: [&str; 37] = [
    "per:positive_impression",
    "per:negative_impression",
    "per:acquaintance",
    "per:alumni",
    "per:boss",
    "per:subordinate",
    "per:client",
    "per:dates",
    "per:friends",
    "per:girl/boyfriend",
    "per:neighbor",
    "per:roommate",
    "per:children",
    "per:other_family",
    "per:parents",
    "per:siblings",
    "per:spouse",
    "per:place_of_residence",
    "per:place_of_birth",
    "per:visited_place",
    "per:origin",
    "per:employee_or_member_of",
    "per:schools_attended",
    "per:works",
    "per:age",
    "per:date_of_birth",
    "per:major",
    "per:place_of_work",
    "per:title",
    "per:alternate_names",
    "per:pet",
    "gpe:residents_of_place",
    "gpe:births_in_place",
    "gpe:visitors_of_place",
    "org:employees_or_members",
    "org:students",
    "unanswerable",
];

// Alternative spellings seen in the literature.
const LABEL_ALIASES: [(&str, &str); 1] = [("gpe:birth_in_place", "gpe:births_in_place")];

pub const UNANSWERABLE: &str = "unanswerable";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationId(pub usize);

/// Closed, ordered set of relation-type names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationVocabulary {
    labels: Vec<String>,
    index: HashMap<String, RelationId>,
}

impl RelationVocabulary {
    /// The 37-label union over the train, dev, and test splits.
    pub fn dialogre() -> Self {
        Self::from_labels(DIALOGRE_RELATIONS.iter().map(|s| s.to_string()).collect())
            .expect("builtin labels are unique")
    }

    pub fn from_labels(labels: Vec<String>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), RelationId(i)).is_some() {
                return Err(Error::Vocabulary(format!("duplicate relation label {l:?}")));
            }
        }
        Ok(Self { labels, index })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn name(&self, id: RelationId) -> &str {
        &self.labels[id.0]
    }

    pub fn id(&self, name: &str) -> Option<RelationId> {
        self.index.get(name).copied().or_else(|| {
            LABEL_ALIASES
                .iter()
                .find(|(alias, _)| *alias == name)
                .and_then(|(_, canonical)| self.index.get(*canonical).copied())
        })
    }

    pub fn ids(&self) -> impl Iterator<Item = RelationId> {
        (0..self.labels.len()).map(RelationId)
    }

    pub fn unanswerable(&self) -> Option<RelationId> {
        self.id(UNANSWERABLE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    /// File name used by the dataset release.
    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.json",
            Split::Dev => "dev.json",
            Split::Test => "test.json",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?} (expected train, dev, or test)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub index: usize,
    /// Raw speaker string, possibly naming several speakers.
    pub speaker_label: String,
    /// Turn text with the speaker prefix removed.
    pub text: String,
}

impl Utterance {
    /// The turn as it appears in the dataset file.
    pub fn raw(&self) -> String {
        if self.text.is_empty() {
            format!("{}:", self.speaker_label)
        } else {
            format!("{}: {}", self.speaker_label, self.text)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationInstance {
    pub subject_text: String,
    pub object_text: String,
    /// Distinct labels in file order.
    pub relation_labels: Vec<RelationId>,
    /// Trigger per label (aligned with `relation_labels`, empty when absent).
    pub trigger_texts: Vec<String>,
    /// Numeric ids as stored in the file.
    pub raw_ids: Vec<i64>,
    pub subject_type: String,
    pub object_type: String,
}

impl RelationInstance {
    pub fn has_label(&self, id: RelationId) -> bool {
        self.relation_labels.contains(&id)
    }

    /// Trigger recorded for `id`, if the pair carries that label.
    pub fn trigger_for(&self, id: RelationId) -> Option<&str> {
        self.relation_labels
            .iter()
            .position(|&l| l == id)
            .map(|i| self.trigger_texts[i].as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    /// Position of the record in its file.
    pub id: usize,
    pub split: Split,
    pub utterances: Vec<Utterance>,
    pub relation_instances: Vec<RelationInstance>,
}

impl Dialogue {
    /// Copy holding only the first `turns` utterances.
    pub fn prefix(&self, turns: usize) -> Dialogue {
        Dialogue {
            id: self.id,
            split: self.split,
            utterances: self.utterances[..turns.min(self.utterances.len())].to_vec(),
            relation_instances: self.relation_instances.clone(),
        }
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct RawRelation {
    x: String,
    y: String,
    r: Vec<String>,
    #[serde(default)]
    rid: Vec<i64>,
    #[serde(default)]
    t: Vec<String>,
    #[serde(default)]
    x_type: String,
    #[serde(default)]
    y_type: String,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawDialogue(Vec<String>, Vec<RawRelation>);

/// Splits `"Speaker 1: text"` on the first colon.
pub fn split_speaker_prefix(turn: &str) -> Option<(&str, &str)> {
    let (label, text) = turn.split_once(':')?;
    let label = label.trim();
    if label.is_empty() {
        return None;
    }
    Some((label, text.trim()))
}

/// Parses a corpus held in memory.
pub fn parse_corpus(json: &str, split: Split, vocab: &RelationVocabulary) -> Result<Vec<Dialogue>> {
    let records: Vec<serde_json::Value> = serde_json::from_str(json)
        .map_err(|e| Error::Parse { record: 0, message: format!("top level is not a JSON list: {e}") })?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, value)| {
            let raw: RawDialogue = serde_json::from_value(value)
                .map_err(|e| Error::Parse { record: i, message: e.to_string() })?;
            convert_record(i, raw, split, vocab)
        })
        .collect()
}

fn convert_record(id: usize, raw: RawDialogue, split: Split, vocab: &RelationVocabulary) -> Result<Dialogue> {
    let RawDialogue(turns, relations) = raw;
    let parse_err = |message: String| Error::Parse { record: id, message };
    if turns.is_empty() {
        return Err(parse_err("dialogue has no turns".into()));
    }
    if relations.is_empty() {
        return Err(parse_err("dialogue has no relation instances".into()));
    }
    let utterances = turns
        .iter()
        .enumerate()
        .map(|(index, turn)| {
            let (label, text) = split_speaker_prefix(turn)
                .ok_or_else(|| parse_err(format!("turn {index} has no \"Speaker: \" prefix: {turn:?}")))?;
            Ok(Utterance { index, speaker_label: label.to_string(), text: text.to_string() })
        })
        .collect::<Result<Vec<_>>>()?;

    let relation_instances = relations
        .into_iter()
        .enumerate()
        .map(|(j, rel)| {
            if rel.r.is_empty() {
                return Err(parse_err(format!("relation {j} has an empty label list")));
            }
            let mut labels = Vec::new();
            let mut triggers = Vec::new();
            for (k, name) in rel.r.iter().enumerate() {
                let rid = vocab.id(name).ok_or_else(|| Error::UnknownLabel(name.clone()))?;
                if !labels.contains(&rid) {
                    labels.push(rid);
                    triggers.push(rel.t.get(k).cloned().unwrap_or_default());
                }
            }
            Ok(RelationInstance {
                subject_text: rel.x,
                object_text: rel.y,
                relation_labels: labels,
                trigger_texts: triggers,
                raw_ids: rel.rid,
                subject_type: rel.x_type,
                object_type: rel.y_type,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Dialogue { id, split, utterances, relation_instances })
}

/// Reads one split file.
pub fn load_corpus(path: &Path, split: Split, vocab: &RelationVocabulary) -> Result<Vec<Dialogue>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, split, vocab)
}

/// Serializes dialogues back into the dataset's JSON shape.
pub fn to_dialogre_json(dialogues: &[Dialogue], vocab: &RelationVocabulary) -> String {
    let raw: Vec<RawDialogue> = dialogues
        .iter()
        .map(|d| {
            let turns = d.utterances.iter().map(Utterance::raw).collect();
            let rels = d
                .relation_instances
                .iter()
                .map(|r| RawRelation {
                    x: r.subject_text.clone(),
                    y: r.object_text.clone(),
                    r: r.relation_labels.iter().map(|&l| vocab.name(l).to_string()).collect(),
                    rid: if r.raw_ids.is_empty() {
                        r.relation_labels.iter().map(|l| l.0 as i64 + 1).collect()
                    } else {
                        r.raw_ids.clone()
                    },
                    t: r.trigger_texts.clone(),
                    x_type: r.subject_type.clone(),
                    y_type: r.object_type.clone(),
                })
                .collect();
            RawDialogue(turns, rels)
        })
        .collect();
    serde_json::to_string_pretty(&raw).expect("corpus serializes")
}

/// Dataset summary in the shape of the usual statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub conversations: usize,
    pub argument_pairs: usize,
    /// Mean tokens per dialogue, counted over full turns including the speaker prefix.
    pub avg_dialogue_length: f64,
    pub avg_turns: f64,
    pub avg_speakers: f64,
}

pub fn corpus_stats(dialogues: &[Dialogue], annotator: &dyn Annotator) -> Result<StatsReport> {
    if dialogues.is_empty() {
        return Err(Error::EmptyInput("corpus_stats needs at least one dialogue"));
    }
    let n = dialogues.len() as f64;
    let mut tokens = 0usize;
    let mut turns = 0usize;
    let mut speakers = 0usize;
    let mut pairs = 0usize;
    for d in dialogues {
        for u in &d.utterances {
            tokens += annotator.tokenize(&u.raw())?.len();
        }
        turns += d.utterances.len();
        speakers += resolve_speakers(d).len();
        pairs += d.relation_instances.len();
    }
    Ok(StatsReport {
        conversations: dialogues.len(),
        argument_pairs: pairs,
        avg_dialogue_length: tokens as f64 / n,
        avg_turns: turns as f64 / n,
        avg_speakers: speakers as f64 / n,
    })
}

/// Per-label pair counts for one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub argument_pairs: usize,
    pub counts: Vec<usize>,
}

impl LabelDistribution {
    /// Share of argument pairs carrying the label, in percent. Multi-label pairs
    /// count once per label, so shares of a split can sum past 100.
    pub fn percentage(&self, id: RelationId) -> f64 {
        if self.argument_pairs == 0 {
            0.0
        } else {
            100.0 * self.counts[id.0] as f64 / self.argument_pairs as f64
        }
    }
}

pub fn label_distribution(dialogues: &[Dialogue], vocab: &RelationVocabulary) -> LabelDistribution {
    let mut counts = vec![0; vocab.len()];
    let mut pairs = 0;
    for inst in dialogues.iter().flat_map(|d| &d.relation_instances) {
        pairs += 1;
        for l in &inst.relation_labels {
            counts[l.0] += 1;
        }
    }
    LabelDistribution { argument_pairs: pairs, counts }
}

/// Label statistics side by side for several splits.
#[derive(Debug, Clone, Serialize)]
pub struct LabelTable {
    pub labels: Vec<String>,
    pub splits: Vec<(Split, LabelDistribution)>,
}

impl LabelTable {
    /// Row order: descending count in the first split, then vocabulary order.
    pub fn row_order(&self) -> Vec<RelationId> {
        let mut ids: Vec<RelationId> = (0..self.labels.len()).map(RelationId).collect();
        if let Some((_, first)) = self.splits.first() {
            ids.sort_by_key(|id| (std::cmp::Reverse(first.counts[id.0]), id.0));
        }
        ids
    }
}

impl fmt::Display for LabelTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.labels.iter().map(|l| l.len()).max().unwrap_or(0).max(13);
        write!(f, "{:<width$}", "relation")?;
        for (s, _) in &self.splits {
            write!(f, " {:>8}", s.as_str())?;
        }
        for (s, _) in &self.splits {
            write!(f, " {:>8}", format!("{}%", s.as_str()))?;
        }
        writeln!(f)?;
        for id in self.row_order() {
            write!(f, "{:<width$}", self.labels[id.0])?;
            for (_, d) in &self.splits {
                write!(f, " {:>8}", d.counts[id.0])?;
            }
            for (_, d) in &self.splits {
                write!(f, " {:>8.2}", d.percentage(id))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<28}{:>10}", "conversations", self.conversations)?;
        writeln!(f, "{:<28}{:>10}", "argument pairs", self.argument_pairs)?;
        writeln!(f, "{:<28}{:>10.1}", "average dialogue length", self.avg_dialogue_length)?;
        writeln!(f, "{:<28}{:>10.1}", "average turns", self.avg_turns)?;
        writeln!(f, "{:<28}{:>10.1}", "average speakers", self.avg_speakers)
    }
}
