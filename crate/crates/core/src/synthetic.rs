//! Small deterministic DialogRE-shaped corpora for tests and smoke runs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{parse_corpus, Dialogue, RelationVocabulary, Split};

const NAMES: &[&str] = &[
    "Emma", "Ross", "Rachel", "Monica", "Joey", "Phoebe", "Ben", "Carol", "Susan", "Janice", "Mike", "Richard",
    "Emily", "Frank", "Alice", "Ursula", "Julie", "Kathy", "Charlie", "David",
];
const PLACES: &[&str] = &["London", "Paris", "Chicago", "Boston", "Ohio", "Vermont", "Tulsa", "Texas"];
const ORGS: &[&str] = &["Vogue", "Gucci", "Starbucks", "Columbia", "Ikea", "Chase"];
const FILLER: &[&str] = &[
    "okay so what happened yesterday at the party ?",
    "i really do not know what you mean .",
    "well that is not what i heard from them .",
    "oh come on , you have to be kidding me !",
    "could we please talk about this later ?",
    "yeah , i think that would be great .",
    "hey , wait a second , where are you going ?",
    "no no no , that is not the point .",
];

struct Template {
    label: &'static str,
    /// `{y}` is replaced by the object; the subject is the speaker of the turn.
    text: &'static str,
    trigger: &'static str,
    object: &'static [&'static str],
    y_type: &'static str,
}

const TEMPLATES: &[Template] = &[
    Template { label: "per:children", text: "{y} is my baby daughter , isn't she cute ?", trigger: "baby daughter", object: NAMES, y_type: "PER" },
    Template { label: "per:siblings", text: "you know {y} is my little brother , right ?", trigger: "brother", object: NAMES, y_type: "PER" },
    Template { label: "per:spouse", text: "i am going home to my husband {y} tonight .", trigger: "husband", object: NAMES, y_type: "PER" },
    Template { label: "per:friends", text: "{y} and i have been best friends forever .", trigger: "best friends", object: NAMES, y_type: "PER" },
    Template { label: "per:place_of_residence", text: "i have lived in {y} for almost ten years .", trigger: "lived in", object: PLACES, y_type: "GPE" },
    Template { label: "per:employee_or_member_of", text: "i just started working at {y} this week .", trigger: "working at", object: ORGS, y_type: "ORG" },
    Template { label: "per:roommate", text: "{y} is my roommate , we share the apartment .", trigger: "roommate", object: NAMES, y_type: "PER" },
    Template { label: "per:boss", text: "{y} is my boss and she hates me .", trigger: "boss", object: NAMES, y_type: "PER" },
];

/// `dialogues` dialogues of `turns` turns with `pairs_per_dialogue` argument
/// pairs each. Every labelled pair is backed by a template turn uttered by
/// the subject; one pair per dialogue is `unanswerable`.
pub fn synthetic_corpus(
    dialogues: usize,
    turns: usize,
    pairs_per_dialogue: usize,
    split: Split,
    seed: u64,
    labels: &RelationVocabulary,
) -> Vec<Dialogue> {
    assert!(turns >= pairs_per_dialogue && pairs_per_dialogue >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(dialogues);
    for _ in 0..dialogues {
        let speakers = rng.gen_range(2..=3usize);
        let mut lines: Vec<String> = (0..turns)
            .map(|t| format!("Speaker {}: {}", t % speakers + 1, FILLER.choose(&mut rng).unwrap()))
            .collect();
        let mut slots: Vec<usize> = (0..turns).collect();
        slots.shuffle(&mut rng);
        let mut relations = Vec::new();
        for p in 0..pairs_per_dialogue {
            let turn = slots[p];
            let speaker = format!("Speaker {}", turn % speakers + 1);
            if p + 1 == pairs_per_dialogue {
                let name = *NAMES.choose(&mut rng).unwrap();
                lines[turn] = format!("{speaker}: i ran into {name} at the coffee place today .");
                relations.push(serde_json::json!({
                    "x": speaker, "y": name, "r": ["unanswerable"], "t": [""], "x_type": "PER", "y_type": "PER",
                }));
                continue;
            }
            let tpl = TEMPLATES.choose(&mut rng).unwrap();
            let object = *tpl.object.choose(&mut rng).unwrap();
            lines[turn] = format!("{speaker}: {}", tpl.text.replace("{y}", object));
            relations.push(serde_json::json!({
                "x": speaker, "y": object, "r": [tpl.label], "t": [tpl.trigger], "x_type": "PER", "y_type": tpl.y_type,
            }));
        }
        records.push(serde_json::json!([lines, relations]));
    }
    let json = serde_json::Value::Array(records).to_string();
    parse_corpus(&json, split, labels).expect("synthetic corpus is well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let v = RelationVocabulary::dialogre();
        let a = synthetic_corpus(5, 6, 3, Split::Train, 11, &v);
        assert_eq!(a.len(), 5);
        assert!(a.iter().all(|d| d.utterances.len() == 6 && d.relation_instances.len() == 3));
        assert_eq!(a, synthetic_corpus(5, 6, 3, Split::Train, 11, &v));
        assert_ne!(a, synthetic_corpus(5, 6, 3, Split::Train, 12, &v));
    }
}
