//! Deterministic rule-based annotator: punctuation-aware tokenizer, word-list
//! POS heuristics, and a gazetteer tagger.

use super::{pos_id, type_id, Annotator, TokenAnnotation};
use crate::error::Result;

const ABBREVIATIONS: &[&str] = &["mr.", "mrs.", "ms.", "dr.", "st.", "jr.", "sr.", "vs.", "prof."];
const CLITICS: &[&str] = &["n't", "'s", "'m", "'re", "'ve", "'ll", "'d"];

const PRON: &[&str] = &[
    "i", "me", "my", "mine", "myself", "you", "your", "yours", "yourself", "yourselves", "he", "him",
    "his", "himself", "she", "her", "hers", "herself", "it", "its", "itself", "we", "us", "our", "ours",
    "ourselves", "they", "them", "their", "theirs", "themselves", "who", "whom", "whose", "what",
    "someone", "somebody", "something", "anyone", "anybody", "anything", "everyone", "everybody",
    "everything", "nobody", "nothing", "ya", "y'all",
];
const DET: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "every", "each", "some", "any", "no", "all",
    "both", "another", "either", "neither", "which",
];
const ADP: &[&str] = &[
    "of", "in", "on", "at", "for", "with", "about", "from", "by", "into", "over", "after", "before",
    "under", "between", "through", "during", "without", "like", "than", "around", "off", "up", "out",
    "down", "across", "behind", "near", "onto", "upon", "toward", "towards", "against", "along",
];
const AUX: &[&str] = &[
    "is", "am", "are", "was", "were", "be", "been", "being", "'m", "'re", "'ve", "'ll", "'d", "do",
    "does", "did", "have", "has", "had", "will", "would", "can", "could", "should", "shall", "may",
    "might", "must", "ca", "wo", "gon", "got",
];
const CCONJ: &[&str] = &["and", "or", "but", "nor", "yet", "&"];
const SCONJ: &[&str] = &["if", "because", "while", "although", "though", "since", "unless", "whether", "until", "cause", "'cause"];
const PART: &[&str] = &["not", "n't", "to"];
const INTJ: &[&str] = &[
    "oh", "hey", "hi", "hello", "yeah", "yes", "okay", "ok", "wow", "uh", "um", "huh", "oops", "whoa",
    "yay", "ah", "please", "bye", "hmm", "mm", "no", "nope", "yep", "ooh", "aw", "aww", "ugh", "god",
];
const ADV: &[&str] = &[
    "very", "really", "just", "so", "too", "also", "now", "then", "here", "there", "always", "never",
    "still", "again", "even", "ever", "only", "maybe", "already", "actually", "totally", "how", "why",
    "when", "where", "well", "back", "away", "together", "soon", "tonight", "today", "tomorrow",
    "yesterday", "anyway", "sometimes", "please", "almost", "once", "ago", "probably",
];
const VERB: &[&str] = &[
    "go", "get", "know", "think", "want", "see", "come", "say", "said", "tell", "told", "love", "make",
    "made", "take", "took", "look", "need", "mean", "let", "give", "gave", "find", "found", "feel",
    "felt", "talk", "try", "call", "hear", "heard", "work", "leave", "left", "meet", "met", "marry",
    "date", "live", "remember", "guess", "believe", "happen", "wait", "kiss", "hate", "went", "gone",
    "saw", "seen", "came", "knew", "thought", "keep", "kept", "put", "sit", "stop", "help", "ask",
    "like", "wanna", "gotta", "understand", "bring", "brought", "buy", "bought", "play", "move",
];
const ADJ: &[&str] = &[
    "good", "great", "nice", "big", "little", "old", "new", "sure", "fine", "bad", "happy", "sorry",
    "right", "wrong", "best", "better", "cute", "funny", "pretty", "crazy", "hot", "cool", "last",
    "next", "first", "other", "own", "same", "whole", "real", "young", "long", "small", "huge",
    "gay", "single", "married", "pregnant", "dead", "weird", "amazing", "ready", "late", "true",
];
const NUMBER_WORDS: &[&str] = &[
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",
    "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen",
    "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety", "hundred",
    "thousand", "million",
];

const PERSON_NAMES: &[&str] = &[
    "ross", "rachel", "monica", "chandler", "joey", "phoebe", "emma", "ben", "carol", "susan",
    "janice", "mike", "richard", "paul", "emily", "mona", "gunther", "frank", "alice", "ursula",
    "julie", "kathy", "tag", "charlie", "david", "mark", "pete", "barry", "judy", "jack", "estelle",
    "amy", "jill", "leonard", "sandra", "erica", "bob", "joanna", "elizabeth", "tim", "kate",
    "eddie", "gary", "danny", "mindy", "paolo", "julio", "nora", "helena", "jasmine", "marcel",
    "jane", "john", "mary", "michael", "sarah", "tom", "james", "anna", "ken", "adams", "geller",
    "green", "bing", "tribbiani", "buffay", "hannigan", "burke", "lisa", "ryan", "dan", "cliff",
    "rick", "steve", "tony", "kim", "bonnie", "fun bobby", "ugly naked guy", "dr. burke",
];
const GPE_NAMES: &[&str] = &[
    "new york", "london", "paris", "vegas", "las vegas", "chicago", "poughkeepsie", "long island",
    "montauk", "ohio", "minsk", "china", "italy", "england", "france", "america", "barbados",
    "vermont", "boston", "jersey", "new jersey", "los angeles", "l.a.", "california", "tulsa",
    "russia", "japan", "canada", "greece", "brooklyn", "manhattan", "queens", "texas", "florida",
    "yemen", "india", "mexico", "spain", "germany", "ireland", "scotland", "africa", "nepal",
];
const ORG_NAMES: &[&str] = &[
    "nyu", "bloomingdale 's", "bloomingdale's", "ralph lauren", "central perk", "columbia",
    "macy 's", "macy's", "fortunata fashions", "days of our lives", "the museum", "museum",
    "new york university", "vogue", "gucci", "starbucks", "ikea", "pottery barn", "chase",
];

fn in_list(list: &[&str], w: &str) -> bool {
    list.contains(&w)
}

fn is_punct_char(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace() && c != '\'' && c != '’'
}

fn normalize_apostrophes(s: &str) -> String {
    s.replace('’', "'")
}

/// Splits text into tokens. Runs of one repeated punctuation character
/// ("...", "!!") stay together; English clitics are separated.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        split_chunk(&normalize_apostrophes(chunk), &mut out);
    }
    out
}

fn push_punct_runs(s: &str, out: &mut Vec<String>) {
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        let mut run = c.to_string();
        while chars.peek() == Some(&c) {
            run.push(chars.next().unwrap());
        }
        out.push(run);
    }
}

fn split_chunk(chunk: &str, out: &mut Vec<String>) {
    // Leading punctuation.
    let lead_end = chunk.char_indices().find(|&(_, c)| !is_punct_char(c)).map(|(i, _)| i).unwrap_or(chunk.len());
    push_punct_runs(&chunk[..lead_end], out);
    let rest = &chunk[lead_end..];
    if rest.is_empty() {
        return;
    }
    // Trailing punctuation, except the period of a known abbreviation.
    let lower = rest.to_lowercase();
    let trail_start = if ABBREVIATIONS.contains(&lower.as_str()) || is_initialism(rest) {
        rest.len()
    } else {
        rest.char_indices()
            .rev()
            .take_while(|&(_, c)| is_punct_char(c))
            .last()
            .map(|(i, _)| i)
            .unwrap_or(rest.len())
    };
    let core = &rest[..trail_start];
    split_clitics(core, out);
    push_punct_runs(&rest[trail_start..], out);
}

fn is_initialism(s: &str) -> bool {
    // "L.A.", "U.S."
    let parts: Vec<&str> = s.split('.').collect();
    parts.len() >= 3
        && parts.last() == Some(&"")
        && parts[..parts.len() - 1].iter().all(|p| p.chars().count() == 1 && p.chars().all(char::is_alphabetic))
}

fn split_clitics(core: &str, out: &mut Vec<String>) {
    if core.is_empty() {
        return;
    }
    let lower = core.to_lowercase();
    for clitic in CLITICS {
        if lower.len() > clitic.len() && lower.ends_with(clitic) {
            let cut = core.len() - clitic.len();
            if core.is_char_boundary(cut) {
                let stem = &core[..cut];
                if stem.chars().any(char::is_alphanumeric) {
                    out.push(stem.to_string());
                    out.push(core[cut..].to_string());
                    return;
                }
            }
        }
    }
    out.push(core.to_string());
}

/// Rule backend; stateless and shareable across workers.
#[derive(Debug, Clone, Default)]
pub struct RuleAnnotator;

impl RuleAnnotator {
    pub fn new() -> Self {
        RuleAnnotator
    }
}

fn pos_of(surface: &str, norm: &str, sentence_initial: bool, prev_norm: Option<&str>) -> &'static str {
    if norm.chars().all(|c| c.is_ascii_digit() || c == ',' || c == '.') && norm.chars().any(|c| c.is_ascii_digit()) {
        return "NUM";
    }
    if surface.chars().all(is_punct_char) {
        return if surface.chars().all(|c| "$%#@+=<>^|~*/\\".contains(c)) { "SYM" } else { "PUNCT" };
    }
    if norm == "'s" {
        return match prev_norm {
            Some("let") => "PRON",
            Some(p) if in_list(PRON, p) || in_list(DET, p) || matches!(p, "there" | "here" | "where" | "how") => "AUX",
            _ => "PART",
        };
    }
    if in_list(NUMBER_WORDS, norm) {
        return "NUM";
    }
    let capitalized = surface.chars().next().is_some_and(char::is_uppercase);
    if in_list(PERSON_NAMES, norm) || (capitalized && !sentence_initial && norm != "i" && !is_closed_class(norm)) {
        return "PROPN";
    }
    for (list, tag) in [
        (PRON, "PRON"),
        (AUX, "AUX"),
        (DET, "DET"),
        (CCONJ, "CCONJ"),
        (SCONJ, "SCONJ"),
        (PART, "PART"),
        (ADP, "ADP"),
        (INTJ, "INTJ"),
        (ADV, "ADV"),
        (ADJ, "ADJ"),
        (VERB, "VERB"),
    ] {
        if in_list(list, norm) {
            return tag;
        }
    }
    if !norm.chars().any(char::is_alphanumeric) {
        return "X";
    }
    if norm.ends_with("ly") && norm.len() > 4 {
        "ADV"
    } else if (norm.ends_with("ing") && norm.len() > 5) || (norm.ends_with("ed") && norm.len() > 4) {
        "VERB"
    } else if ["ful", "ous", "able", "ible", "ive", "less", "ish"].iter().any(|s| norm.ends_with(s) && norm.len() > s.len() + 2) {
        "ADJ"
    } else {
        "NOUN"
    }
}

fn is_closed_class(norm: &str) -> bool {
    [PRON, DET, ADP, AUX, CCONJ, SCONJ, PART, INTJ].iter().any(|l| in_list(l, norm))
}

/// Longest-match gazetteer lookup starting at `start`; returns (length, type).
fn gazetteer_match(norms: &[String], start: usize) -> Option<(usize, &'static str)> {
    let mut best: Option<(usize, &'static str)> = None;
    for (list, ty) in [(PERSON_NAMES, "PERSON"), (GPE_NAMES, "GPE"), (ORG_NAMES, "ORG")] {
        for entry in list {
            let parts: Vec<&str> = entry.split(' ').collect();
            if start + parts.len() <= norms.len()
                && parts.iter().zip(&norms[start..]).all(|(p, n)| p == n)
                && best.is_none_or(|(len, _)| parts.len() > len)
            {
                best = Some((parts.len(), ty));
            }
        }
    }
    best
}

impl Annotator for RuleAnnotator {
    fn name(&self) -> &str {
        "rule"
    }

    fn version(&self) -> &str {
        "1"
    }

    fn shareable(&self) -> bool {
        true
    }

    fn tokenize(&self, text: &str) -> Result<Vec<String>> {
        Ok(tokenize(text))
    }

    fn annotate(&self, text: &str) -> Result<Vec<TokenAnnotation>> {
        let surfaces = tokenize(text);
        let norms: Vec<String> = surfaces.iter().map(|s| s.to_lowercase()).collect();
        let mut pos = Vec::with_capacity(surfaces.len());
        for (i, s) in surfaces.iter().enumerate() {
            let initial = i == 0 || matches!(norms[i - 1].chars().last(), Some('.' | '!' | '?' | ':' | '"'));
            let prev = if i > 0 { Some(norms[i - 1].as_str()) } else { None };
            pos.push(pos_of(s, &norms[i], initial, prev));
        }

        let mut ner = vec!["NONE"; surfaces.len()];
        let mut i = 0;
        while i < norms.len() {
            if norms[i] == "speaker" && norms.get(i + 1).is_some_and(|n| n.chars().all(|c| c.is_ascii_digit())) {
                ner[i] = "PERSON";
                ner[i + 1] = "PERSON";
                i += 2;
                continue;
            }
            if let Some((len, ty)) = gazetteer_match(&norms, i) {
                ner[i..i + len].fill(ty);
                i += len;
                continue;
            }
            if pos[i] == "NUM" {
                ner[i] = "VALUE";
            } else if pos[i] == "PROPN" {
                ner[i] = "PERSON";
            }
            i += 1;
        }

        Ok(surfaces
            .into_iter()
            .zip(norms)
            .zip(pos.into_iter().zip(ner))
            .map(|((surface, norm), (p, t))| TokenAnnotation {
                surface,
                norm,
                pos: pos_id(p).expect("rule tags are in the POS vocabulary"),
                ner: type_id(t).expect("rule types are in the type vocabulary"),
            })
            .collect())
    }
}
