//! Tokens, POS tags, entity types, speakers, and argument mentions.

mod external;
mod rules;

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::corpus::Dialogue;
use crate::error::{Error, Result};

pub use external::ExternalAnnotator;
pub use rules::{tokenize as rule_tokenize, RuleAnnotator};

/// Universal part-of-speech tags.
pub const POS_TAGS: [&str; 17] = [
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART", "PRON", "PROPN", "PUNCT",
    "SCONJ", "SYM", "VERB", "X",
];

/// The 18 OntoNotes entity types, the two coarse argument types used by the
/// corpus annotations, and `NONE` for untyped tokens.
pub const ENTITY_TYPES: [&str; 21] = [
    "PERSON", "NORP", "FAC", "ORG", "GPE", "LOC", "PRODUCT", "EVENT", "WORK_OF_ART", "LAW", "LANGUAGE",
    "DATE", "TIME", "PERCENT", "MONEY", "QUANTITY", "ORDINAL", "CARDINAL", "STRING", "VALUE", "NONE",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PosId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpeakerId(pub usize);

pub fn pos_id(tag: &str) -> Option<PosId> {
    POS_TAGS.iter().position(|&t| t == tag).map(PosId)
}

pub fn type_id(name: &str) -> Option<TypeId> {
    ENTITY_TYPES.iter().position(|&t| t == name).map(TypeId)
}

pub fn none_type() -> TypeId {
    TypeId(ENTITY_TYPES.len() - 1)
}

/// Maps the corpus argument types (`PER`, `GPE`, `ORG`, `STRING`, `VALUE`).
pub fn corpus_type(x_type: &str) -> TypeId {
    let name = match x_type.trim().to_ascii_uppercase().as_str() {
        "PER" | "PERSON" => "PERSON",
        "GPE" => "GPE",
        "ORG" => "ORG",
        "STRING" => "STRING",
        "VALUE" => "VALUE",
        _ => "NONE",
    };
    type_id(name).expect("known type")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenAnnotation {
    pub surface: String,
    /// Lowercased surface.
    pub norm: String,
    pub pos: PosId,
    pub ner: TypeId,
}

/// A tokenizer + tagger backend.
pub trait Annotator: Send + Sync {
    fn name(&self) -> &str;
    fn version(&self) -> &str;
    /// Whether one instance may serve several workers at once.
    fn shareable(&self) -> bool;
    fn tokenize(&self, text: &str) -> Result<Vec<String>>;
    fn annotate(&self, text: &str) -> Result<Vec<TokenAnnotation>>;

    fn cache_key(&self) -> String {
        format!("{}-{}", self.name(), self.version())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArgumentSlot {
    Subject,
    Object,
}

impl ArgumentSlot {
    pub const BOTH: [ArgumentSlot; 2] = [ArgumentSlot::Subject, ArgumentSlot::Object];

    pub fn index(self) -> usize {
        match self {
            ArgumentSlot::Subject => 0,
            ArgumentSlot::Object => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerMention {
    pub start: usize,
    pub end: usize,
    pub speaker: SpeakerId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedUtterance {
    pub index: usize,
    pub tokens: Vec<TokenAnnotation>,
    /// Speakers credited with the turn, ascending.
    pub speaker_ids: Vec<SpeakerId>,
    /// Token ranges naming a speaker of the dialogue.
    pub speaker_mentions: Vec<SpeakerMention>,
}

/// Speaker identities of one dialogue.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SpeakerMap {
    /// Canonical name per id, in order of first appearance.
    pub names: Vec<String>,
    /// Speakers of each turn.
    pub turn_speakers: Vec<Vec<SpeakerId>>,
}

fn speaker_key(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl SpeakerMap {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Case- and whitespace-insensitive lookup.
    pub fn id_of(&self, name: &str) -> Option<SpeakerId> {
        let key = speaker_key(name);
        self.names.iter().position(|n| speaker_key(n) == key).map(SpeakerId)
    }

    pub fn turns_of(&self, id: SpeakerId) -> Vec<usize> {
        self.turn_speakers
            .iter()
            .enumerate()
            .filter(|(_, s)| s.contains(&id))
            .map(|(t, _)| t)
            .collect()
    }
}

/// Splits a turn label such as `"Speaker 1, Speaker 2 and Speaker 3"` into names.
pub fn split_speaker_names(label: &str) -> Vec<String> {
    let mut names = Vec::new();
    for piece in label.split(',') {
        let mut rest = piece.trim();
        if let Some(r) = rest.strip_prefix("and ") {
            rest = r;
        }
        for name in rest.split(" and ") {
            let name = name.trim();
            if !name.is_empty() {
                names.push(name.to_string());
            }
        }
    }
    if names.is_empty() {
        names.push(label.trim().to_string());
    }
    names
}

pub fn resolve_speakers(dialogue: &Dialogue) -> SpeakerMap {
    let mut map = SpeakerMap::default();
    for u in &dialogue.utterances {
        let mut ids = Vec::new();
        for name in split_speaker_names(&u.speaker_label) {
            let id = match map.id_of(&name) {
                Some(id) => id,
                None => {
                    map.names.push(name);
                    SpeakerId(map.names.len() - 1)
                }
            };
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
        ids.sort();
        map.turn_speakers.push(ids);
    }
    map
}

/// Argument strings of one relation instance, tokenized and case-folded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairTokens {
    pub subject: Vec<String>,
    pub object: Vec<String>,
}

/// A dialogue with its annotation, as stored in the preprocessing cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedDialogue {
    pub dialogue: Dialogue,
    pub utterances: Vec<AnnotatedUtterance>,
    pub speakers: SpeakerMap,
    pub pairs: Vec<PairTokens>,
}

/// Start positions of `needle` inside `haystack`.
pub fn find_sequence<T: PartialEq>(haystack: &[T], needle: &[T]) -> Vec<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return Vec::new();
    }
    (0..=haystack.len() - needle.len())
        .filter(|&i| haystack[i..i + needle.len()] == *needle)
        .collect()
}

fn fold_tokens(tokens: Vec<String>) -> Vec<String> {
    tokens.into_iter().map(|t| t.to_lowercase()).collect()
}

pub fn annotate_dialogue(dialogue: &Dialogue, backend: &dyn Annotator) -> Result<AnnotatedDialogue> {
    let speakers = resolve_speakers(dialogue);
    let speaker_tokens: Vec<Vec<String>> = speakers
        .names
        .iter()
        .map(|n| backend.tokenize(n).map(fold_tokens))
        .collect::<Result<_>>()?;

    let mut utterances = Vec::with_capacity(dialogue.utterances.len());
    for (u, ids) in dialogue.utterances.iter().zip(&speakers.turn_speakers) {
        let tokens = backend
            .annotate(&u.text)
            .map_err(|e| Error::Annotation { turn: u.index, message: e.to_string() })?;
        let norms: Vec<String> = tokens.iter().map(|t| t.norm.clone()).collect();
        let mut speaker_mentions = Vec::new();
        for (sid, needle) in speaker_tokens.iter().enumerate() {
            for start in find_sequence(&norms, needle) {
                speaker_mentions.push(SpeakerMention { start, end: start + needle.len(), speaker: SpeakerId(sid) });
            }
        }
        speaker_mentions.sort_by_key(|m| (m.start, m.end, m.speaker));
        utterances.push(AnnotatedUtterance { index: u.index, tokens, speaker_ids: ids.clone(), speaker_mentions });
    }

    let pairs = dialogue
        .relation_instances
        .iter()
        .map(|r| {
            Ok(PairTokens {
                subject: fold_tokens(backend.tokenize(&r.subject_text)?),
                object: fold_tokens(backend.tokenize(&r.object_text)?),
            })
        })
        .collect::<Result<_>>()?;

    Ok(AnnotatedDialogue { dialogue: dialogue.clone(), utterances, speakers, pairs })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionSpan {
    pub utterance_index: usize,
    pub start: usize,
    pub end: usize,
    pub slot: ArgumentSlot,
}

impl MentionSpan {
    pub fn token_range(&self) -> Range<usize> {
        self.start..self.end
    }
}

/// Where one argument occurs in (a prefix of) a dialogue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgumentLocation {
    pub slot: ArgumentSlot,
    pub spans: Vec<MentionSpan>,
    /// Set when the argument string names a speaker of the dialogue.
    pub speaker: Option<SpeakerId>,
    /// Corpus-provided coarse type, mapped into the type vocabulary.
    pub corpus_type: TypeId,
}

impl ArgumentLocation {
    pub fn located(&self) -> bool {
        !self.spans.is_empty()
    }

    /// Earliest turn holding a mention.
    pub fn first_turn(&self) -> Option<usize> {
        self.spans.iter().map(|s| s.utterance_index).min()
    }

    /// Turns holding a mention, ascending and distinct.
    pub fn turns(&self) -> Vec<usize> {
        let mut t: Vec<usize> = self.spans.iter().map(|s| s.utterance_index).collect();
        t.dedup();
        t
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairLocation {
    pub subject: ArgumentLocation,
    pub object: ArgumentLocation,
}

impl PairLocation {
    pub fn get(&self, slot: ArgumentSlot) -> &ArgumentLocation {
        match slot {
            ArgumentSlot::Subject => &self.subject,
            ArgumentSlot::Object => &self.object,
        }
    }
}

/// Case-insensitive token-sequence matches of each argument within the first
/// `turns` turns. A speaker-valued argument also counts every turn of that
/// speaker as a mention site with an empty token range.
pub fn locate_arguments(annotated: &AnnotatedDialogue, pair: usize, turns: usize) -> PairLocation {
    let inst = &annotated.dialogue.relation_instances[pair];
    let toks = &annotated.pairs[pair];
    let one = |slot, text: &str, needle: &[String], ty: &str| {
        locate_one(annotated, slot, text, needle, ty, turns)
    };
    PairLocation {
        subject: one(ArgumentSlot::Subject, &inst.subject_text, &toks.subject, &inst.subject_type),
        object: one(ArgumentSlot::Object, &inst.object_text, &toks.object, &inst.object_type),
    }
}

fn locate_one(
    annotated: &AnnotatedDialogue,
    slot: ArgumentSlot,
    text: &str,
    needle: &[String],
    x_type: &str,
    turns: usize,
) -> ArgumentLocation {
    let speaker = annotated.speakers.id_of(text);
    let mut spans = Vec::new();
    for u in annotated.utterances.iter().take(turns) {
        if let Some(sid) = speaker {
            if u.speaker_ids.contains(&sid) {
                spans.push(MentionSpan { utterance_index: u.index, start: 0, end: 0, slot });
            }
        }
        let norms: Vec<&str> = u.tokens.iter().map(|t| t.norm.as_str()).collect();
        let needle: Vec<&str> = needle.iter().map(String::as_str).collect();
        for start in find_sequence(&norms, &needle) {
            spans.push(MentionSpan { utterance_index: u.index, start, end: start + needle.len(), slot });
        }
    }
    spans.sort_by_key(|s| (s.utterance_index, s.start, s.end));
    spans.dedup();
    ArgumentLocation { slot, spans, speaker, corpus_type: corpus_type(x_type) }
}

/// Counts, per speaker-id slot, used for summary statistics.
pub fn speaker_turn_counts(map: &SpeakerMap) -> BTreeMap<SpeakerId, usize> {
    let mut counts = BTreeMap::new();
    for ids in &map.turn_speakers {
        for &id in ids {
            *counts.entry(id).or_insert(0) += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_corpus, RelationVocabulary, Split};

    fn toy(turns: &[&str], x: &str, y: &str) -> Dialogue {
        let v = RelationVocabulary::dialogre();
        let json = serde_json::json!([[turns, [{"x": x, "y": y, "r": ["unanswerable"], "x_type": "PER", "y_type": "PER"}]]]);
        parse_corpus(&json.to_string(), Split::Dev, &v).unwrap().remove(0)
    }

    #[test]
    fn speakers_get_one_id_each() {
        let d = toy(&["Speaker 1: a", "Speaker 2: b", "Speaker 1: c"], "a", "b");
        let m = resolve_speakers(&d);
        assert_eq!(m.len(), 2);
        assert_eq!(m.turns_of(SpeakerId(0)), vec![0, 2]);
        assert_eq!(m.turns_of(SpeakerId(1)), vec![1]);
    }

    #[test]
    fn multi_speaker_turn_is_credited_to_all() {
        let d = toy(&["Speaker 1: a", "Speaker 2: b", "Speaker 1 and Speaker 2: yes!"], "a", "b");
        let m = resolve_speakers(&d);
        assert_eq!(m.len(), 2);
        assert_eq!(m.turn_speakers[2], vec![SpeakerId(0), SpeakerId(1)]);
        assert_eq!(split_speaker_names("Speaker 1, Speaker 2, and Speaker 3"), ["Speaker 1", "Speaker 2", "Speaker 3"]);
    }

    #[test]
    fn empty_turn_gives_empty_tokens() {
        let d = toy(&["Speaker 1:", "Speaker 2: hi"], "a", "b");
        let a = annotate_dialogue(&d, &RuleAnnotator::new()).unwrap();
        assert!(a.utterances[0].tokens.is_empty());
        assert_eq!(a.utterances[0].speaker_ids, vec![SpeakerId(0)]);
    }

    #[test]
    fn annotation_is_deterministic() {
        let d = toy(&["Speaker 1: Emma is my baby daughter.", "Speaker 2: Wow!"], "Speaker 1", "Emma");
        let b = RuleAnnotator::new();
        assert_eq!(annotate_dialogue(&d, &b).unwrap(), annotate_dialogue(&d, &b).unwrap());
    }

    #[test]
    fn locating_plain_and_speaker_arguments() {
        let d = toy(
            &["Speaker 1: Emma is my baby daughter.", "Speaker 2: Wow!", "Speaker 1: Thanks, Speaker 2."],
            "Speaker 1",
            "emma",
        );
        let a = annotate_dialogue(&d, &RuleAnnotator::new()).unwrap();
        let loc = locate_arguments(&a, 0, usize::MAX);
        assert_eq!(loc.object.spans, vec![MentionSpan { utterance_index: 0, start: 0, end: 1, slot: ArgumentSlot::Object }]);
        assert_eq!(loc.subject.speaker, Some(SpeakerId(0)));
        assert_eq!(loc.subject.turns(), vec![0, 2]);
        assert!(loc.subject.spans.iter().all(|s| s.token_range().is_empty()));
        // the prefix limit hides later turns
        assert_eq!(locate_arguments(&a, 0, 1).subject.turns(), vec![0]);
        assert_eq!(a.utterances[2].speaker_mentions, vec![SpeakerMention { start: 2, end: 4, speaker: SpeakerId(1) }]);
    }

    #[test]
    fn absent_argument_is_unlocated() {
        let d = toy(&["Speaker 1: hello there"], "xyzzy", "hello");
        let a = annotate_dialogue(&d, &RuleAnnotator::new()).unwrap();
        let loc = locate_arguments(&a, 0, usize::MAX);
        assert!(!loc.subject.located());
        assert!(loc.subject.spans.is_empty());
        assert!(loc.object.located());
    }

    #[test]
    fn corpus_types_map_into_vocabulary() {
        assert_eq!(corpus_type("PER"), type_id("PERSON").unwrap());
        assert_eq!(corpus_type("STRING"), type_id("STRING").unwrap());
        assert_eq!(corpus_type("???"), none_type());
    }
}
