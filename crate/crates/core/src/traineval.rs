//! Training loop, standard and conversational evaluation, prediction, and the
//! experiment-matrix driver.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotate::{annotate_dialogue, locate_arguments, AnnotatedDialogue, Annotator};
use crate::autograd::{Gradients, ParamStore, Tape};
use crate::checkpoint::TrainedModel;
use crate::config::{RunConfig, TrainConfig};
use crate::corpus::{Dialogue, RelationId, RelationInstance, RelationVocabulary, Split, Utterance};
use crate::error::{Error, Result};
use crate::hetgraph::HeteroGraph;
use crate::metrics::LabelCounts;
use crate::model::{gold_matrix, Model, Prediction};
use crate::optim::Adam;
use crate::vectors::{init_word_table, PretrainedVectors, WordVocab};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_f1: Option<f64>,
    pub dev_f1c: Option<f64>,
    pub lr: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Option<Split>,
    pub f1_standard: Option<f64>,
    pub f1_conversational: Option<f64>,
    pub per_label_f1: Vec<(String, Option<f64>)>,
    /// Scored (pair, prefix) instances; equals the pair count in the standard setting.
    pub instances: usize,
}

impl EvalReport {
    fn new(split: Option<Split>, labels: &RelationVocabulary, counts: &LabelCounts, conversational: bool) -> Self {
        let f1 = counts.macro_f1();
        Self {
            split,
            f1_standard: (!conversational).then_some(f1),
            f1_conversational: conversational.then_some(f1),
            per_label_f1: labels.labels().iter().cloned().zip(counts.per_label()).collect(),
            instances: counts.instances,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(split) = self.split {
            let _ = writeln!(s, "split\t{split}");
        }
        if let Some(f) = self.f1_standard {
            let _ = writeln!(s, "macro_f1\t{:.4}", f);
        }
        if let Some(f) = self.f1_conversational {
            let _ = writeln!(s, "macro_f1c\t{:.4}", f);
        }
        let _ = writeln!(s, "instances\t{}", self.instances);
        for (label, f) in &self.per_label_f1 {
            if let Some(f) = f {
                let _ = writeln!(s, "{label}\t{f:.4}");
            }
        }
        s
    }
}

/// Extra outputs of a training run.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Also compute dev F1 in the conversational setting after every epoch.
    pub conversational_dev: bool,
    /// JSON-lines training log.
    pub log_path: Option<PathBuf>,
    /// Where to save the best checkpoint as it improves.
    pub checkpoint_path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The checkpoint with the best dev F1 (the last one when there is no dev set).
    pub best: TrainedModel,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_f1: Option<f64>,
}

/// Seed for one (epoch, batch, group) dropout stream.
fn stream_seed(seed: u64, parts: &[u64]) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update(p.to_le_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Fresh model with the word table drawn from `vectors` (or hashed draws).
pub fn init_model(
    config: &TrainConfig,
    labels: &RelationVocabulary,
    vocab: WordVocab,
    vectors: Option<&PretrainedVectors>,
) -> Result<TrainedModel> {
    config.validate()?;
    if let Some(v) = vectors {
        if v.dim() != config.word_dim {
            return Err(Error::Config(format!(
                "pretrained vectors have {} dimensions, word_dim is {}",
                v.dim(),
                config.word_dim
            )));
        }
    }
    let table = init_word_table(&vocab, vectors, config.word_dim);
    let mut params = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model = Model::new(&mut params, config.model_config(labels.len()), vocab, table, &mut rng)?;
    Ok(TrainedModel { config: config.clone(), labels: labels.clone(), model, params })
}

/// Training words plus words of `others` that have pretrained vectors.
pub fn build_vocab(
    train: &[AnnotatedDialogue],
    others: &[&[AnnotatedDialogue]],
    vectors: Option<&PretrainedVectors>,
) -> WordVocab {
    let words = |ds: &[AnnotatedDialogue]| -> Vec<String> {
        ds.iter().flat_map(|d| d.utterances.iter().flat_map(|u| u.tokens.iter().map(|t| t.norm.clone()))).collect()
    };
    let train_words = words(train);
    let other_words: Vec<String> = others.iter().flat_map(|d| words(d)).collect();
    WordVocab::build(train_words.iter().map(String::as_str), other_words.iter().map(String::as_str), vectors)
}

/// Loss and summed gradients of one batch. Pairs of the same dialogue form a
/// group that shares one encoder pass; groups run in parallel and their
/// gradients are added in group order, so results do not depend on threading.
pub fn batch_gradients(
    tm: &TrainedModel,
    data: &[AnnotatedDialogue],
    batch: &[(usize, usize)],
    dropout_seed: Option<u64>,
) -> Result<(f64, Gradients<f32>)> {
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for &(d, p) in batch {
        match groups.iter_mut().find(|(gd, _)| *gd == d) {
            Some((_, ps)) => ps.push(p),
            None => groups.push((d, vec![p])),
        }
    }
    let total = batch.len() as f32;
    let results: Vec<Result<(f64, Gradients<f32>)>> = groups
        .par_iter()
        .enumerate()
        .map(|(gi, (d, pairs))| {
            let ad = &data[*d];
            let mut rng = dropout_seed.map(|s| ChaCha8Rng::seed_from_u64(stream_seed(s, &[gi as u64])));
            let mut tape = Tape::new(&tm.params);
            let out = tm.model.forward_group(&mut tape, ad, pairs, usize::MAX, rng.as_mut())?;
            let insts: Vec<&RelationInstance> = pairs.iter().map(|&p| &ad.dialogue.relation_instances[p]).collect();
            let gold: Array2<f32> = gold_matrix(&insts, tm.labels.len());
            let loss = tape.bce_with_logits(out.logits, gold);
            let weight = pairs.len() as f32 / total;
            let value = tape.scalar(loss) as f64 * weight as f64;
            let mut grads = tape.backward(loss);
            grads.scale(weight);
            Ok((value, grads))
        })
        .collect();
    let mut loss = 0.0;
    let mut grads = Gradients::empty(tm.params.len());
    for r in results {
        let (l, g) = r?;
        loss += l;
        grads.merge(g);
    }
    Ok((loss, grads))
}

pub fn train(
    config: &TrainConfig,
    labels: &RelationVocabulary,
    train_set: &[AnnotatedDialogue],
    dev_set: &[AnnotatedDialogue],
    vocab: WordVocab,
    vectors: Option<&PretrainedVectors>,
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    let mut tm = init_model(config, labels, vocab, vectors)?;
    let instances: Vec<(usize, usize)> = train_set
        .iter()
        .enumerate()
        .flat_map(|(d, ad)| (0..ad.dialogue.relation_instances.len()).map(move |p| (d, p)))
        .collect();
    if instances.is_empty() {
        return Err(Error::EmptyInput("training set without argument pairs"));
    }
    let mut adam = Adam::new(&tm.params, config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps);
    let mut log_file = match &options.log_path {
        Some(p) => {
            if let Some(dir) = p.parent() {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            Some(std::fs::File::create(p).map_err(|e| Error::io(p, e))?)
        }
        None => None,
    };

    let start = Instant::now();
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, ParamStore<f32>)> = None;
    let mut since_best = 0;
    for epoch in 1..=config.epochs {
        let mut order = instances.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(stream_seed(config.seed, &[epoch as u64])));
        let mut epoch_loss = 0.0;
        let batches: Vec<&[(usize, usize)]> = order.chunks(config.batch_size).collect();
        for (b, batch) in batches.iter().enumerate() {
            let seed = stream_seed(config.seed, &[epoch as u64, b as u64]);
            let (loss, grads) = batch_gradients(&tm, train_set, batch, Some(seed))?;
            if !loss.is_finite() || !grads.sq_norm().is_finite() {
                return Err(Error::Numeric(format!("epoch {epoch}, batch {b}: loss {loss}")));
            }
            adam.step(&mut tm.params, &grads);
            epoch_loss += loss;
        }
        epoch_loss /= batches.len() as f64;

        let (dev_f1, dev_f1c) = if dev_set.is_empty() {
            (None, None)
        } else {
            let f1 = evaluate_standard(&tm, dev_set)?.f1_standard;
            let f1c = if options.conversational_dev {
                evaluate_conversational(&tm, dev_set)?.f1_conversational
            } else {
                None
            };
            (f1, f1c)
        };
        let record = EpochRecord {
            epoch,
            train_loss: epoch_loss,
            dev_f1,
            dev_f1c,
            lr: config.learning_rate,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        log::info!("epoch {epoch}: loss {epoch_loss:.5} dev_f1 {dev_f1:?} dev_f1c {dev_f1c:?}");
        if let Some(f) = log_file.as_mut() {
            let line = serde_json::to_string(&record).expect("record serializes");
            writeln!(f, "{line}").map_err(|e| Error::io(options.log_path.as_ref().unwrap(), e))?;
        }
        log.push(record);

        let score = dev_f1.unwrap_or(f64::NEG_INFINITY);
        let improved = match &best {
            None => true,
            Some((b, _, _)) => dev_f1.is_none() || score > *b,
        };
        if improved {
            best = Some((score, epoch, tm.params.clone()));
            since_best = 0;
            if let Some(p) = &options.checkpoint_path {
                tm.save(p)?;
            }
        } else {
            since_best += 1;
            if since_best >= config.patience {
                log::info!("no dev improvement for {} epochs; stopping", config.patience);
                break;
            }
        }
    }
    let (score, best_epoch, params) = best.expect("at least one epoch");
    tm.params = params;
    Ok(TrainOutcome {
        best: tm,
        log,
        best_epoch,
        best_dev_f1: (!dev_set.is_empty()).then_some(score),
    })
}

/// Predictions for `pairs` of one dialogue seen through its first `turns` turns.
pub fn predict_group(
    tm: &TrainedModel,
    annotated: &AnnotatedDialogue,
    pairs: &[usize],
    turns: usize,
) -> Result<(Vec<Prediction>, Vec<HeteroGraph>)> {
    let mut tape = Tape::inference(&tm.params);
    let out = tm.model.forward_group(&mut tape, annotated, pairs, turns, None)?;
    let logits = tape.value(out.logits);
    let preds = logits
        .rows()
        .into_iter()
        .map(|r| Prediction::from_logits(&r.iter().map(|&x| x as f64).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    Ok((preds, out.graphs))
}

fn check_label_space(tm: &TrainedModel) -> Result<()> {
    if tm.model.config.labels != tm.labels.len() {
        return Err(Error::LabelSpace(format!(
            "classifier has {} outputs, vocabulary has {} labels",
            tm.model.config.labels,
            tm.labels.len()
        )));
    }
    Ok(())
}

/// Every pair of every dialogue scored on the full dialogue.
pub fn evaluate_standard(tm: &TrainedModel, dialogues: &[AnnotatedDialogue]) -> Result<EvalReport> {
    check_label_space(tm)?;
    let per_dialogue: Vec<Result<LabelCounts>> = dialogues
        .par_iter()
        .map(|ad| {
            let mut counts = LabelCounts::new(tm.labels.len());
            let pairs: Vec<usize> = (0..ad.dialogue.relation_instances.len()).collect();
            if pairs.is_empty() {
                return Ok(counts);
            }
            let (preds, _) = predict_group(tm, ad, &pairs, usize::MAX)?;
            for (p, pred) in pairs.iter().zip(preds) {
                counts.add(&pred.labels, &ad.dialogue.relation_instances[*p].relation_labels);
            }
            Ok(counts)
        })
        .collect();
    let mut total = LabelCounts::new(tm.labels.len());
    for c in per_dialogue {
        total.merge(&c?);
    }
    Ok(EvalReport::new(dialogues.first().map(|d| d.dialogue.split), &tm.labels, &total, false))
}

/// Prefix lengths (numbers of turns) on which a pair is scored in the
/// conversational setting: from the first turn by which both arguments have
/// appeared through the whole dialogue. A speaker-valued argument appears at
/// its speaker's first turn. A pair with an argument that never appears is
/// scored on the full dialogue only.
pub fn conversational_prefixes(annotated: &AnnotatedDialogue, pair: usize) -> Vec<usize> {
    let n = annotated.utterances.len();
    let loc = locate_arguments(annotated, pair, n);
    match (loc.subject.first_turn(), loc.object.first_turn()) {
        (Some(x), Some(y)) => (x.max(y) + 1..=n).collect(),
        _ => vec![n],
    }
}

/// Labels scored for a pair on a prefix of `turns` turns. Labels the pair does
/// not hold are always scored; a gold label is scored once its trigger has
/// appeared in the prefix. On the full dialogue everything is scored, which
/// also covers gold labels without a trigger.
pub fn evidence_labels(inst: &RelationInstance, dialogue: &Dialogue, turns: usize, labels: usize) -> Vec<bool> {
    if turns >= dialogue.utterances.len() {
        return vec![true; labels];
    }
    let prefix: String = dialogue.utterances[..turns].iter().map(|u| u.raw().to_lowercase()).collect::<Vec<_>>().join("\n");
    (0..labels)
        .map(|l| match inst.trigger_for(RelationId(l)) {
            None => true,
            Some(t) => {
                let t = t.trim().to_lowercase();
                !t.is_empty() && prefix.contains(&t)
            }
        })
        .collect()
}

/// Every pair scored on every prefix it qualifies for, counting only the
/// labels in that prefix's evidence set.
pub fn evaluate_conversational(tm: &TrainedModel, dialogues: &[AnnotatedDialogue]) -> Result<EvalReport> {
    check_label_space(tm)?;
    let n_labels = tm.labels.len();
    let per_dialogue: Vec<Result<LabelCounts>> = dialogues
        .par_iter()
        .map(|ad| {
            let mut counts = LabelCounts::new(n_labels);
            let mut by_prefix: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for p in 0..ad.dialogue.relation_instances.len() {
                for t in conversational_prefixes(ad, p) {
                    by_prefix.entry(t).or_default().push(p);
                }
            }
            for (turns, pairs) in by_prefix {
                let (preds, _) = predict_group(tm, ad, &pairs, turns)?;
                for (&p, pred) in pairs.iter().zip(preds) {
                    let inst = &ad.dialogue.relation_instances[p];
                    let scored = evidence_labels(inst, &ad.dialogue, turns, n_labels);
                    counts.add_within(&pred.labels, &inst.relation_labels, |l| scored[l.0]);
                }
            }
            Ok(counts)
        })
        .collect();
    let mut total = LabelCounts::new(n_labels);
    for c in per_dialogue {
        total.merge(&c?);
    }
    Ok(EvalReport::new(dialogues.first().map(|d| d.dialogue.split), &tm.labels, &total, true))
}

/// Classifies one (subject, object) pair in raw `"Speaker k: text"` turns.
pub fn predict_pair(
    tm: &TrainedModel,
    backend: &dyn Annotator,
    turns: &[String],
    subject: &str,
    object: &str,
) -> Result<(Prediction, HeteroGraph)> {
    if turns.is_empty() {
        return Err(Error::EmptyInput("dialogue without turns"));
    }
    let utterances = turns
        .iter()
        .enumerate()
        .map(|(index, raw)| {
            let (speaker, text) = crate::corpus::split_speaker_prefix(raw)
                .ok_or_else(|| Error::Parse { record: index, message: "turn has no speaker prefix".into() })?;
            Ok(Utterance { index, speaker_label: speaker.to_string(), text: text.to_string() })
        })
        .collect::<Result<Vec<_>>>()?;
    let placeholder = tm.labels.unanswerable().unwrap_or(RelationId(0));
    let dialogue = Dialogue {
        id: 0,
        split: Split::Test,
        utterances,
        relation_instances: vec![RelationInstance {
            subject_text: subject.to_string(),
            object_text: object.to_string(),
            relation_labels: vec![placeholder],
            trigger_texts: vec![String::new()],
            raw_ids: vec![],
            subject_type: String::new(),
            object_type: String::new(),
        }],
    };
    let annotated = annotate_dialogue(&dialogue, backend)?;
    let (mut preds, mut graphs) = predict_group(tm, &annotated, &[0], usize::MAX)?;
    Ok((preds.remove(0), graphs.remove(0)))
}

/// One row of an experiment matrix: a label plus config overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRow {
    pub label: String,
    pub overrides: Vec<String>,
}

/// Reads `[[row]]` tables; each has a `label` and any config keys to override.
pub fn parse_matrix(text: &str) -> Result<Vec<MatrixRow>> {
    let doc: toml::Table = text.parse().map_err(|e| Error::Config(format!("matrix file: {e}")))?;
    let rows = match doc.get("row") {
        None => return Ok(Vec::new()),
        Some(toml::Value::Array(rows)) => rows,
        Some(_) => return Err(Error::Config("`row` must be an array of tables".into())),
    };
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let table = row.as_table().ok_or_else(|| Error::Config(format!("row {i} is not a table")))?;
            let label = table
                .get("label")
                .and_then(|v| v.as_str())
                .ok_or_else(|| Error::Config(format!("row {i} has no label")))?
                .to_string();
            let overrides =
                table.iter().filter(|(k, _)| *k != "label").map(|(k, v)| format!("{k}={v}")).collect();
            Ok(MatrixRow { label, overrides })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub label: String,
    pub overrides: Vec<String>,
    pub dev: Option<EvalReport>,
    pub test: Option<EvalReport>,
    pub error: Option<String>,
}

pub struct ExperimentData<'a> {
    pub labels: &'a RelationVocabulary,
    pub train: &'a [AnnotatedDialogue],
    pub dev: &'a [AnnotatedDialogue],
    pub test: &'a [AnnotatedDialogue],
    pub vectors: Option<&'a PretrainedVectors>,
}

/// Trains and evaluates once per row. A failing row is recorded and the
/// matrix continues. No rows means a single full-model row.
pub fn run_experiment_matrix(base: &RunConfig, rows: &[MatrixRow], data: &ExperimentData<'_>) -> Vec<ExperimentResult> {
    let default_row = [MatrixRow { label: "full model".into(), overrides: vec![] }];
    let rows = if rows.is_empty() { &default_row[..] } else { rows };
    let vocab = build_vocab(data.train, &[data.dev, data.test], data.vectors);
    rows.iter()
        .map(|row| {
            let run = || -> Result<(EvalReport, EvalReport)> {
                let cfg = base.with_overrides(row.overrides.iter().map(String::as_str))?;
                let outcome =
                    train(&cfg.train, data.labels, data.train, data.dev, vocab.clone(), data.vectors, &TrainOptions::default())?;
                let mut dev = evaluate_standard(&outcome.best, data.dev)?;
                dev.f1_conversational = evaluate_conversational(&outcome.best, data.dev)?.f1_conversational;
                let mut test = evaluate_standard(&outcome.best, data.test)?;
                test.f1_conversational = evaluate_conversational(&outcome.best, data.test)?.f1_conversational;
                Ok((dev, test))
            };
            match run() {
                Ok((dev, test)) => ExperimentResult {
                    label: row.label.clone(),
                    overrides: row.overrides.clone(),
                    dev: Some(dev),
                    test: Some(test),
                    error: None,
                },
                Err(e) => {
                    log::error!("row {:?} failed: {e}", row.label);
                    ExperimentResult {
                        label: row.label.clone(),
                        overrides: row.overrides.clone(),
                        dev: None,
                        test: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect()
}

pub fn results_tsv(results: &[ExperimentResult]) -> String {
    let pct = |v: Option<f64>| v.map_or("-".to_string(), |f| format!("{:.2}", 100.0 * f));
    let mut s = String::from("label\tdev_f1\tdev_f1c\ttest_f1\ttest_f1c\tstatus\n");
    for r in results {
        let dev = r.dev.as_ref();
        let test = r.test.as_ref();
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.label,
            pct(dev.and_then(|d| d.f1_standard)),
            pct(dev.and_then(|d| d.f1_conversational)),
            pct(test.and_then(|d| d.f1_standard)),
            pct(test.and_then(|d| d.f1_conversational)),
            r.error.as_deref().unwrap_or("ok"),
        );
    }
    s
}

pub fn results_text(results: &[ExperimentResult]) -> String {
    let tsv = results_tsv(results);
    let rows: Vec<Vec<&str>> = tsv.lines().map(|l| l.split('\t').collect()).collect();
    let widths: Vec<usize> = (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    let mut s = String::new();
    for r in &rows {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(s, "{}", cells.join("  ").trim_end());
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::RuleAnnotator;
    use crate::cache::annotate_corpus;
    use crate::corpus::parse_corpus;

    fn annotated(json: serde_json::Value) -> Vec<AnnotatedDialogue> {
        let v = RelationVocabulary::dialogre();
        let d = parse_corpus(&json.to_string(), Split::Dev, &v).unwrap();
        annotate_corpus(&d, &RuleAnnotator::new()).unwrap()
    }

    #[test]
    fn pair_in_final_turn_has_one_prefix() {
        let a = annotated(serde_json::json!([[
            ["Speaker 1: hi", "Speaker 2: hello", "Speaker 1: Emma met Ross"],
            [{"x": "Emma", "y": "Ross", "r": ["per:friends"], "t": [""]}]
        ]]));
        assert_eq!(conversational_prefixes(&a[0], 0), vec![3]);
    }

    #[test]
    fn prefixes_start_when_both_arguments_appeared() {
        let a = annotated(serde_json::json!([[
            ["Speaker 1: Emma is my baby daughter", "Speaker 2: wow", "Speaker 1: yes"],
            [{"x": "Speaker 1", "y": "Emma", "r": ["per:children"], "t": ["baby daughter"]},
             {"x": "Speaker 2", "y": "xyzzy", "r": ["unanswerable"], "t": [""]}]
        ]]));
        assert_eq!(conversational_prefixes(&a[0], 0), vec![1, 2, 3]);
        assert_eq!(conversational_prefixes(&a[0], 1), vec![3]);
    }

    #[test]
    fn evidence_follows_triggers() {
        let a = annotated(serde_json::json!([[
            ["Speaker 1: Emma is here", "Speaker 2: my baby daughter", "Speaker 1: ok"],
            [{"x": "Speaker 2", "y": "Emma", "r": ["per:children", "per:alternate_names"], "t": ["baby daughter", ""]}]
        ]]));
        let d = &a[0].dialogue;
        let inst = &d.relation_instances[0];
        let v = RelationVocabulary::dialogre();
        let children = v.id("per:children").unwrap().0;
        let alt = v.id("per:alternate_names").unwrap().0;
        let e1 = evidence_labels(inst, d, 1, v.len());
        assert!(!e1[children] && !e1[alt] && e1[0]);
        let e2 = evidence_labels(inst, d, 2, v.len());
        assert!(e2[children] && !e2[alt]);
        assert!(evidence_labels(inst, d, 3, v.len()).iter().all(|&x| x));
    }

    #[test]
    fn matrix_parsing() {
        let rows = parse_matrix("[[row]]\nlabel = \"Strategy1\"\nschedule = \"A\"\n[[row]]\nlabel = \"no POS\"\nno_pos_embedding = true\n").unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].overrides, vec!["schedule=\"A\"".to_string()]);
        let cfg = RunConfig::default().with_overrides(rows[0].overrides.iter().map(String::as_str)).unwrap();
        assert_eq!(cfg.train.schedule.to_string(), "A");
        assert!(parse_matrix("").unwrap().is_empty());
        assert!(parse_matrix("[[row]]\nschedule = \"A\"\n").is_err());
    }
}
