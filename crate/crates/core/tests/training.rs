mod common;

use common::*;
use ndarray::Array2;

use hgat::annotate::{AnnotatedDialogue, RuleAnnotator};
use hgat::autograd::Tape;
use hgat::cache::annotate_corpus;
use hgat::config::TrainConfig;
use hgat::corpus::{RelationVocabulary, Split};
use hgat::model::gold_matrix;
use hgat::synthetic::synthetic_corpus;
use hgat::traineval::{
    build_vocab, conversational_prefixes, evaluate_conversational, evaluate_standard, train, TrainOptions,
};

fn small_config() -> TrainConfig {
    TrainConfig {
        width: 20,
        heads: 2,
        edge_dim: 4,
        word_dim: 8,
        pos_dim: 4,
        type_dim: 4,
        local_hidden: 6,
        global_hidden: 6,
        epochs: 1,
        batch_size: 4,
        ..Default::default()
    }
}

fn corpus(n: usize, split: Split, seed: u64) -> Vec<AnnotatedDialogue> {
    let labels = RelationVocabulary::dialogre();
    annotate_corpus(&synthetic_corpus(n, 6, 3, split, seed, &labels), &RuleAnnotator::new()).unwrap()
}

/// Attention from type nodes only trains where a basic node has several type
/// neighbours, so the second dialogue carries a mixed-type argument. Its empty
/// turn exercises the pad row.
#[test]
fn every_parameter_receives_gradient() {
    let mut dialogues = vec![emma_dialogue()];
    dialogues.push(annotated_toy(serde_json::json!([[
        ["Speaker 1: Ross from Vogue ?", "Speaker 2:", "Speaker 1: okay"],
        [{"x": "Ross from Vogue", "y": "Speaker 1", "r": ["per:friends"], "t": [""], "x_type": "PER", "y_type": "PER"}]
    ]])));
    let vocab = build_vocab(&dialogues, &[], None);
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
    let mut store = hgat::autograd::ParamStore::<f64>::new();
    let cfg = tiny_train_config();
    let table = random_matrix(&mut rng, vocab.len(), cfg.word_dim);
    let model = hgat::model::Model::new(&mut store, cfg.model_config(37), vocab, table, &mut rng).unwrap();

    let mut live = vec![false; store.len()];
    for ad in &dialogues {
        let pairs: Vec<usize> = (0..ad.dialogue.relation_instances.len()).collect();
        let insts: Vec<_> = ad.dialogue.relation_instances.iter().collect();
        let gold: Array2<f64> = gold_matrix(&insts, 37);
        let mut tape = Tape::new(&store);
        let out = model.forward_group(&mut tape, ad, &pairs, usize::MAX, None).unwrap();
        let loss = tape.bce_with_logits(out.logits, gold);
        let grads = tape.backward(loss);
        for (id, _, v) in store.iter() {
            if grads.dense(id, v.dim()).iter().any(|&g| g != 0.0) {
                live[id.0] = true;
            }
        }
    }
    let dead: Vec<&str> = store.iter().filter(|(id, _, _)| !live[id.0]).map(|(_, n, _)| n).collect();
    assert!(dead.is_empty(), "parameters without gradient: {dead:?}");
}

#[test]
fn training_is_deterministic_across_thread_counts() {
    let labels = RelationVocabulary::dialogre();
    let data = corpus(6, Split::Train, 5);
    let vocab = build_vocab(&data, &[], None);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| train(&small_config(), &labels, &data, &[], vocab.clone(), None, &TrainOptions::default()).unwrap())
    };
    let a = run(1);
    let b = run(3);
    assert_eq!(a.log[0].train_loss, b.log[0].train_loss);
    for ((_, _, x), (_, _, y)) in a.best.params.iter().zip(b.best.params.iter()) {
        assert_eq!(x, y);
    }
}

#[test]
fn evaluation_ignores_dialogue_order() {
    let labels = RelationVocabulary::dialogre();
    let train_set = corpus(4, Split::Train, 6);
    let dev = corpus(5, Split::Dev, 7);
    let vocab = build_vocab(&train_set, &[&dev], None);
    let tm = train(&small_config(), &labels, &train_set, &[], vocab, None, &TrainOptions::default()).unwrap().best;
    let forward = evaluate_standard(&tm, &dev).unwrap();
    let mut reversed = dev.clone();
    reversed.reverse();
    assert_eq!(forward, evaluate_standard(&tm, &reversed).unwrap());
    assert_eq!(forward.instances, 15);

    let conv = evaluate_conversational(&tm, &dev).unwrap();
    let prefixes: usize =
        dev.iter().map(|ad| (0..ad.dialogue.relation_instances.len()).map(|p| conversational_prefixes(ad, p).len()).sum::<usize>()).sum();
    assert_eq!(conv.instances, prefixes);
    assert!(conv.instances >= forward.instances);
    assert!(conv.f1_conversational.unwrap() >= 0.0 && conv.f1_conversational.unwrap() <= 1.0);
}

#[test]
fn best_dev_checkpoint_matches_its_log_entry() {
    let labels = RelationVocabulary::dialogre();
    let train_set = corpus(6, Split::Train, 8);
    let dev = corpus(3, Split::Dev, 9);
    let vocab = build_vocab(&train_set, &[&dev], None);
    let cfg = TrainConfig { epochs: 3, ..small_config() };
    let out = train(&cfg, &labels, &train_set, &dev, vocab, None, &TrainOptions::default()).unwrap();
    let logged = out.log[out.best_epoch - 1].dev_f1.unwrap();
    assert_eq!(out.best_dev_f1, Some(logged));
    assert!(out.log.iter().all(|r| r.dev_f1.unwrap() <= logged));
    assert_eq!(evaluate_standard(&out.best, &dev).unwrap().f1_standard, Some(logged));
}

#[test]
fn divergence_is_reported_with_its_batch() {
    let labels = RelationVocabulary::dialogre();
    let data = corpus(2, Split::Train, 10);
    let vocab = build_vocab(&data, &[], None);
    let cfg = TrainConfig { learning_rate: 1e30, epochs: 3, ..small_config() };
    match train(&cfg, &labels, &data, &[], vocab, None, &TrainOptions::default()) {
        Err(hgat::Error::Numeric(msg)) => assert!(msg.contains("batch"), "{msg}"),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("expected divergence"),
    }
}
