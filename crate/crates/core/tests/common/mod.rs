//! Scalar reference implementations and fixtures shared by the integration
//! tests and the acceptance report.
#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hgat::annotate::{annotate_dialogue, AnnotatedDialogue, ArgumentSlot, RuleAnnotator, SpeakerId, TypeId};
use hgat::autograd::{ParamStore, Tape, Var};
use hgat::corpus::{parse_corpus, RelationId, RelationVocabulary, Split};
use hgat::gat::{Activation, GatConfig, GatLayer, MetaPathSchedule, NodeStates};
use hgat::hetgraph::{Direction, Edge, EdgeFamily, HeteroGraph, StateFamily};
use hgat::metrics::LabelCounts;

pub type Matrix = Vec<Vec<f64>>;

pub fn to_rows(a: &Array2<f64>) -> Matrix {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.len(), y.len());
            x.iter().zip(y).map(|(p, q)| (p - q).abs())
        })
        .fold(0.0, f64::max)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

fn vecmat(x: &[f64], w: &Array2<f64>) -> Vec<f64> {
    (0..w.ncols()).map(|j| (0..x.len()).map(|i| x[i] * w[[i, j]]).sum()).collect()
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn activate(x: f64, a: Activation) -> f64 {
    match a {
        Activation::Elu => {
            if x > 0.0 {
                x
            } else {
                x.exp() - 1.0
            }
        }
        Activation::Relu => x.max(0.0),
        Activation::Identity => x,
    }
}

/// Edge list of one step, recomputed from the raw edge families.
pub fn oracle_edges(g: &HeteroGraph, dir: Direction) -> Vec<(usize, usize, usize)> {
    let nw = g.words.len();
    let ns = g.speakers.len();
    let mut out = Vec::new();
    for e in &g.edges {
        let (from_utterance, basic) = match e.family {
            EdgeFamily::UtteranceWord => (true, e.to),
            EdgeFamily::UtteranceSpeaker => (true, nw + e.to),
            EdgeFamily::UtteranceArgument => (true, nw + ns + e.to),
            EdgeFamily::TypeWord => (false, e.to),
            EdgeFamily::TypeArgument => (false, nw + ns + e.to),
        };
        let edge = match (dir, from_utterance) {
            (Direction::A, true) | (Direction::C, false) => (e.from, basic, e.feature),
            (Direction::D, true) | (Direction::B, false) => (basic, e.from, e.feature),
            _ => continue,
        };
        out.push(edge);
    }
    out
}

/// Attention weight of every edge and head, edges in the given order.
pub fn oracle_attention(
    store: &ParamStore<f64>,
    layer: &GatLayer,
    target: &Matrix,
    source: &Matrix,
    edges: &[(usize, usize, usize)],
) -> Matrix {
    let c = &layer.config;
    let (k, dh) = (c.heads, c.head_width());
    let wt = store.get(layer.target_proj);
    let ws = store.get(layer.source_proj);
    let at = store.get(layer.att_target);
    let a_s = store.get(layer.att_source);
    let ae = store.get(layer.att_edge);
    let table = store.get(layer.edge_table);
    let score = |s: usize, t: usize, f: usize, h: usize| {
        let zt = vecmat(&target[t], wt);
        let zs = vecmat(&source[s], ws);
        let mut x = 0.0;
        for j in 0..dh {
            x += at[[h, j]] * zt[h * dh + j] + a_s[[h, j]] * zs[h * dh + j];
        }
        for m in 0..c.edge_dim {
            x += table[[f, m]] * ae[[m, h]];
        }
        leaky(x, c.negative_slope)
    };
    edges
        .iter()
        .map(|&(s, t, f)| {
            (0..k)
                .map(|h| {
                    let mine = score(s, t, f, h).exp();
                    let total: f64 =
                        edges.iter().filter(|e| e.1 == t).map(|&(s2, _, f2)| score(s2, t, f2, h).exp()).sum();
                    mine / total
                })
                .collect()
        })
        .collect()
}

pub fn oracle_update(
    store: &ParamStore<f64>,
    layer: &GatLayer,
    target: &Matrix,
    source: &Matrix,
    edges: &[(usize, usize, usize)],
) -> Matrix {
    let c = &layer.config;
    let (d, dh) = (c.width, c.head_width());
    let alpha = oracle_attention(store, layer, target, source, edges);
    let wv = store.get(layer.value_proj);
    let w1 = store.get(layer.ffn_in);
    let b1 = store.get(layer.ffn_in_bias);
    let w2 = store.get(layer.ffn_out);
    let b2 = store.get(layer.ffn_out_bias);
    (0..target.len())
        .map(|t| {
            if !edges.iter().any(|e| e.1 == t) {
                return target[t].clone();
            }
            let mut agg = vec![0.0; d];
            for (e, &(s, t2, _)) in edges.iter().enumerate() {
                if t2 != t {
                    continue;
                }
                let v = vecmat(&source[s], wv);
                for (i, a) in agg.iter_mut().enumerate() {
                    *a += alpha[e][i / dh] * v[i];
                }
            }
            let h: Vec<f64> = (0..d).map(|i| activate(agg[i], c.activation) + target[t][i]).collect();
            let inner: Vec<f64> = vecmat(&h, w1).iter().enumerate().map(|(j, x)| (x + b1[[0, j]]).max(0.0)).collect();
            vecmat(&inner, w2).iter().enumerate().map(|(j, x)| x + b2[[0, j]]).collect()
        })
        .collect()
}

/// States after every step of `schedule`, one layer per step.
pub fn oracle_schedule(
    store: &ParamStore<f64>,
    layers: &[GatLayer],
    schedule: &MetaPathSchedule,
    graph: &HeteroGraph,
    init: [Matrix; 3],
) -> [Matrix; 3] {
    let mut states = init;
    let slot = |f: StateFamily| match f {
        StateFamily::Utterance => 0,
        StateFamily::Basic => 1,
        StateFamily::Type => 2,
    };
    for (&dir, layer) in schedule.steps.iter().zip(layers) {
        let edges = oracle_edges(graph, dir);
        if edges.is_empty() {
            continue;
        }
        let (s, t) = (slot(dir.source()), slot(dir.target()));
        states[t] = oracle_update(store, layer, &states[t], &states[s], &edges);
    }
    states
}

/// Two utterances, two words, one speaker, and one type node: six nodes.
pub fn toy_graph() -> HeteroGraph {
    let e = |family, from, to, feature| Edge { family, from, to, feature };
    HeteroGraph {
        utterances: vec![0, 1],
        words: vec!["emma".into(), "baby".into()],
        speakers: vec![SpeakerId(0)],
        speaker_slots: vec![0],
        arguments: vec![],
        types: vec![TypeId(0)],
        edges: vec![
            e(EdgeFamily::UtteranceWord, 0, 0, 1),
            e(EdgeFamily::UtteranceWord, 1, 0, 2),
            e(EdgeFamily::UtteranceWord, 1, 1, 0),
            e(EdgeFamily::UtteranceSpeaker, 0, 0, 3),
            e(EdgeFamily::UtteranceSpeaker, 1, 0, 3),
            e(EdgeFamily::TypeWord, 0, 0, 4),
        ],
        argument_words: [vec![0], vec![]],
        argument_speakers: [None, Some(0)],
    }
}

/// Five nodes with an argument node and a type-argument edge.
pub fn toy_graph_with_argument() -> HeteroGraph {
    let e = |family, from, to, feature| Edge { family, from, to, feature };
    HeteroGraph {
        utterances: vec![0, 1],
        words: vec!["emma".into()],
        speakers: vec![],
        speaker_slots: vec![],
        arguments: vec![ArgumentSlot::Subject],
        types: vec![TypeId(3)],
        edges: vec![
            e(EdgeFamily::UtteranceWord, 0, 0, 0),
            e(EdgeFamily::UtteranceArgument, 1, 0, 2),
            e(EdgeFamily::TypeWord, 0, 0, 4),
            e(EdgeFamily::TypeArgument, 0, 0, 1),
        ],
        argument_words: [vec![0], vec![]],
        argument_speakers: [None, None],
    }
}

pub fn gat_config(width: usize, heads: usize, activation: Activation) -> GatConfig {
    GatConfig { width, heads, edge_dim: 3, edge_features: 5, ffn_inner: 2 * width, negative_slope: 0.2, activation }
}

pub fn random_layers(store: &mut ParamStore<f64>, schedule: &MetaPathSchedule, cfg: &GatConfig, seed: u64) -> Vec<GatLayer> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers: Vec<GatLayer> = (0..schedule.len())
        .map(|i| GatLayer::new(store, &format!("gat.{i}"), cfg.clone(), &mut rng))
        .collect();
    // the stock biases start at zero; draw them so the oracle sees them
    for l in &layers {
        *store.get_mut(l.ffn_in_bias) = random_matrix(&mut rng, 1, cfg.ffn_inner);
        *store.get_mut(l.ffn_out_bias) = random_matrix(&mut rng, 1, cfg.width);
    }
    layers
}

pub fn random_states(graph: &HeteroGraph, width: usize, seed: u64) -> [Array2<f64>; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    [
        random_matrix(&mut rng, graph.utterance_count(), width),
        random_matrix(&mut rng, graph.basic_count(), width),
        random_matrix(&mut rng, graph.type_count(), width),
    ]
}

pub struct GatOracleErrors {
    pub attention: f64,
    pub update: f64,
    pub schedule: f64,
}

impl GatOracleErrors {
    pub fn max(&self) -> f64 {
        self.attention.max(self.update).max(self.schedule)
    }
}

/// Largest deviation between the tape implementation and the scalar oracle
/// over both toy graphs, every direction, and two activations.
pub fn gat_oracle_errors(seed: u64) -> GatOracleErrors {
    let mut errs = GatOracleErrors { attention: 0.0, update: 0.0, schedule: 0.0 };
    for (gi, graph) in [toy_graph(), toy_graph_with_argument()].into_iter().enumerate() {
        for activation in [Activation::Elu, Activation::Relu] {
            let width = 4;
            let cfg = gat_config(width, 2, activation);
            let schedule: MetaPathSchedule = "ABCDA".parse().unwrap();
            let mut store = ParamStore::new();
            let layers = random_layers(&mut store, &schedule, &cfg, seed + gi as u64);
            let init = random_states(&graph, width, seed + 100 + gi as u64);
            let batch = hgat::hetgraph::GraphBatch::new(&[&graph]);

            for (&dir, layer) in schedule.steps.iter().zip(&layers).take(4) {
                let edges = graph.directed(dir);
                let family = |f: StateFamily| match f {
                    StateFamily::Utterance => &init[0],
                    StateFamily::Basic => &init[1],
                    StateFamily::Type => &init[2],
                };
                let (t, s) = (family(dir.target()), family(dir.source()));
                let mut tape = Tape::new(&store);
                let tv = tape.constant(t.clone());
                let sv = tape.constant(s.clone());
                let alpha = layer.attention(&mut tape, tv, sv, &edges);
                let out = layer.update(&mut tape, tv, sv, &edges);

                let oracle_list: Vec<(usize, usize, usize)> =
                    (0..edges.len()).map(|i| (edges.sources[i], edges.targets[i], edges.features[i])).collect();
                let mut independent = oracle_edges(&graph, dir);
                let mut sorted = oracle_list.clone();
                independent.sort_by_key(|e| (e.1, e.0, e.2));
                sorted.sort_by_key(|e| (e.1, e.0, e.2));
                assert_eq!(independent, sorted, "edge lists of direction {}", dir.letter());

                let a_or = oracle_attention(&store, layer, &to_rows(t), &to_rows(s), &oracle_list);
                errs.attention = errs.attention.max(max_abs_diff(&to_rows(tape.value(alpha)), &a_or));
                let u_or = oracle_update(&store, layer, &to_rows(t), &to_rows(s), &independent);
                errs.update = errs.update.max(max_abs_diff(&to_rows(tape.value(out)), &u_or));
            }

            let mut tape = Tape::new(&store);
            let u = tape.constant(init[0].clone());
            let b = tape.constant(init[1].clone());
            let ty = tape.constant(init[2].clone());
            let fin = hgat::gat::run_schedule(&mut tape, &batch, NodeStates::new(u, b, ty), &schedule, &layers);
            let or = oracle_schedule(&store, &layers, &schedule, &graph, [to_rows(&init[0]), to_rows(&init[1]), to_rows(&init[2])]);
            for (v, o) in [fin.utterances, fin.basic, fin.types].iter().zip(&or) {
                errs.schedule = errs.schedule.max(max_abs_diff(&to_rows(tape.value(*v)), o));
            }
        }
    }
    errs
}

/// Classifier probabilities and loss against a dot-product oracle.
pub fn classify_and_loss_errors(seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, width, labels) = (4, 6, 3);
    let mut store = ParamStore::<f64>::new();
    let lin = hgat::nn::Linear::new(&mut store, "classifier", width, labels, true, &mut rng);
    *store.get_mut(lin.bias.unwrap()) = random_matrix(&mut rng, 1, labels);
    let x = random_matrix(&mut rng, n, width);
    let gold = Array2::from_shape_fn((n, labels), |(i, j)| if (i + j) % 2 == 0 { 1.0 } else { 0.0 });

    let mut tape = Tape::new(&store);
    let xv = tape.constant(x.clone());
    let logits = lin.forward(&mut tape, xv);
    let loss = tape.bce_with_logits(logits, gold.clone());
    let z = tape.value(logits).clone();

    let w = store.get(lin.weight);
    let b = store.get(lin.bias.unwrap());
    let mut prob_err: f64 = 0.0;
    let mut loss_sum = 0.0;
    for i in 0..n {
        let row: Vec<f64> = z.row(i).to_vec();
        let pred = hgat::model::Prediction::from_logits(&row).unwrap();
        for j in 0..labels {
            let dot: f64 = (0..width).map(|k| x[[i, k]] * w[[k, j]]).sum::<f64>() + b[[0, j]];
            let p = 1.0 / (1.0 + (-dot).exp());
            prob_err = prob_err.max((pred.probabilities[j] - p).abs());
            let y = gold[[i, j]];
            loss_sum += -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
        }
    }
    let loss_oracle = loss_sum / (n * labels) as f64;
    (prob_err, (tape.scalar(loss) - loss_oracle).abs())
}

/// Macro F1 of the two-label toy table: one TP and one FP on the first
/// label, one TP and one FN on the second.
pub fn macro_f1_toy() -> f64 {
    let mut c = LabelCounts::new(2);
    c.add(&[RelationId(0)], &[RelationId(0)]);
    c.add(&[RelationId(0)], &[RelationId(1)]);
    c.add(&[RelationId(1)], &[RelationId(1)]);
    c.macro_f1()
}

/// Brute-force macro F1 over labels present in any gold set.
pub fn brute_macro_f1(pairs: &[(Vec<usize>, Vec<usize>)], labels: usize) -> f64 {
    let mut f1s = Vec::new();
    for l in 0..labels {
        if !pairs.iter().any(|(_, g)| g.contains(&l)) {
            continue;
        }
        let tp = pairs.iter().filter(|(p, g)| p.contains(&l) && g.contains(&l)).count() as f64;
        let fp = pairs.iter().filter(|(p, g)| p.contains(&l) && !g.contains(&l)).count() as f64;
        let fn_ = pairs.iter().filter(|(p, g)| !p.contains(&l) && g.contains(&l)).count() as f64;
        let prec = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
        let rec = if tp + fn_ == 0.0 { 0.0 } else { tp / (tp + fn_) };
        f1s.push(if prec + rec == 0.0 { 0.0 } else { 2.0 * prec * rec / (prec + rec) });
    }
    if f1s.is_empty() {
        0.0
    } else {
        f1s.iter().sum::<f64>() / f1s.len() as f64
    }
}

/// Below this magnitude the central difference is dominated by rounding.
pub const GRADIENT_FLOOR: f64 = 1e-6;

/// Largest relative deviation between analytic and central-difference
/// gradients over up to `per_tensor` entries of every parameter tensor, plus
/// the first live entries of each. Entries whose gradients are both below
/// [`GRADIENT_FLOOR`] are skipped.
pub fn gradient_check(
    store: &ParamStore<f64>,
    loss: &dyn Fn(&mut Tape<'_, f64>) -> Var,
    per_tensor: usize,
    seed: u64,
) -> (f64, String) {
    let mut tape = Tape::new(store);
    let out = loss(&mut tape);
    let grads = tape.backward(out);
    drop(tape);
    let eval = |s: &ParamStore<f64>| {
        let mut t = Tape::new(s);
        let v = loss(&mut t);
        t.scalar(v)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = 1e-5;
    let mut worst = (0.0, String::new());
    let mut work = store.clone();
    for (id, name, value) in store.iter() {
        let analytic = grads.dense(id, value.dim());
        let n = value.len();
        let picks: Vec<usize> = if n <= per_tensor { (0..n).collect() } else { (0..per_tensor).map(|_| rng.gen_range(0..n)).collect() };
        // rows that took part in the forward pass, for gathered tables
        let live: Vec<usize> = analytic.iter().enumerate().filter(|(_, g)| **g != 0.0).map(|(i, _)| i).collect();
        let extra: Vec<usize> = live.iter().copied().take(per_tensor).collect();
        for idx in picks.into_iter().chain(extra) {
            let (r, c) = (idx / value.ncols(), idx % value.ncols());
            let orig = value[[r, c]];
            work.get_mut(id)[[r, c]] = orig + eps;
            let up = eval(&work);
            work.get_mut(id)[[r, c]] = orig - eps;
            let down = eval(&work);
            work.get_mut(id)[[r, c]] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[[r, c]];
            let scale = a.abs().max(numeric.abs());
            if scale < GRADIENT_FLOOR {
                continue;
            }
            let rel = (a - numeric).abs() / scale;
            if rel > worst.0 {
                worst = (rel, format!("{name}[{r},{c}]: analytic {a:e}, numeric {numeric:e}"));
            }
        }
    }
    worst
}

pub fn annotated_toy(json: serde_json::Value) -> AnnotatedDialogue {
    let v = RelationVocabulary::dialogre();
    let d = parse_corpus(&json.to_string(), Split::Train, &v).unwrap();
    annotate_dialogue(&d[0], &RuleAnnotator::new()).unwrap()
}

pub fn emma_dialogue() -> AnnotatedDialogue {
    annotated_toy(serde_json::json!([[
        ["Speaker 1: Emma is my baby daughter .", "Speaker 2: Oh , she lives in London ?", "Speaker 1: Yes , with Ross ."],
        [
            {"x": "Speaker 1", "y": "Emma", "r": ["per:children"], "t": ["baby daughter"], "x_type": "PER", "y_type": "PER"},
            {"x": "Emma", "y": "London", "r": ["per:place_of_residence", "per:alternate_names"], "t": ["lives in", ""], "x_type": "PER", "y_type": "GPE"},
            {"x": "Ross", "y": "Speaker 2", "r": ["unanswerable"], "t": [""], "x_type": "PER", "y_type": "PER"}
        ]
    ]]))
}

pub fn tiny_train_config() -> hgat::config::TrainConfig {
    hgat::config::TrainConfig {
        width: 4,
        heads: 2,
        edge_dim: 3,
        word_dim: 4,
        pos_dim: 2,
        type_dim: 2,
        local_hidden: 3,
        local_layers: 2,
        global_hidden: 3,
        global_layers: 1,
        ..Default::default()
    }
}

/// Encoder outputs (token states, pooled, global) contracted with fixed weights.
pub fn encoder_gradient_check(seed: u64) -> (f64, String) {
    use hgat::encoder::{Encoder, TokenIds};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = tiny_train_config().model_config(3).encoder;
    let mut store = ParamStore::<f64>::new();
    let table = random_matrix(&mut rng, 6, cfg.word_dim);
    let enc = Encoder::new(&mut store, cfg.clone(), table, &mut rng);
    let turns = vec![
        TokenIds { words: vec![2, 3, 4], pos: vec![0, 5, 1], types: vec![1, 20, 2] },
        TokenIds::default(),
        TokenIds { words: vec![5, 2], pos: vec![3, 0], types: vec![0, 1] },
    ];
    let w_tok = random_matrix(&mut rng, 6, 2 * cfg.local_hidden);
    let w_pool = random_matrix(&mut rng, 3, 2 * cfg.local_hidden);
    let w_glob = random_matrix(&mut rng, 3, cfg.output_width());
    let loss = move |tape: &mut Tape<'_, f64>| {
        let e = enc.encode(tape, &turns, None).unwrap();
        let mut total = None;
        for (v, w) in [(e.token_states.data, &w_tok), (e.pooled, &w_pool), (e.global_states, &w_glob)] {
            let c = tape.constant(w.clone());
            let m = tape.mul(v, c);
            let s = tape.sum(m);
            total = Some(match total {
                None => s,
                Some(t) => tape.add(t, s),
            });
        }
        total.unwrap()
    };
    gradient_check(&store, &loss, 12, seed)
}

/// A full ABCDA schedule on the six-node toy graph, contracted with fixed weights.
pub fn gat_gradient_check(seed: u64) -> (f64, String) {
    let graph = toy_graph();
    let cfg = gat_config(4, 2, Activation::Elu);
    let schedule: MetaPathSchedule = "ABCDA".parse().unwrap();
    let mut store = ParamStore::new();
    let layers = random_layers(&mut store, &schedule, &cfg, seed);
    let init = random_states(&graph, cfg.width, seed + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
    let weights = [
        random_matrix(&mut rng, graph.utterance_count(), cfg.width),
        random_matrix(&mut rng, graph.basic_count(), cfg.width),
        random_matrix(&mut rng, graph.type_count(), cfg.width),
    ];
    let batch = hgat::hetgraph::GraphBatch::new(&[&graph]);
    let loss = move |tape: &mut Tape<'_, f64>| {
        let u = tape.constant(init[0].clone());
        let b = tape.constant(init[1].clone());
        let t = tape.constant(init[2].clone());
        let fin = hgat::gat::run_schedule(tape, &batch, NodeStates::new(u, b, t), &schedule, &layers);
        let mut total = None;
        for (v, w) in [fin.utterances, fin.basic, fin.types].into_iter().zip(&weights) {
            let c = tape.constant(w.clone());
            let m = tape.mul(v, c);
            let s = tape.sum(m);
            total = Some(match total {
                None => s,
                Some(acc) => tape.add(acc, s),
            });
        }
        total.unwrap()
    };
    gradient_check(&store, &loss, 12, seed)
}

pub fn tiny_model(ad: &AnnotatedDialogue, seed: u64) -> (ParamStore<f64>, hgat::model::Model) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = tiny_train_config();
    let vocab = hgat::traineval::build_vocab(std::slice::from_ref(ad), &[], None);
    let mut store = ParamStore::<f64>::new();
    let table = random_matrix(&mut rng, vocab.len(), cfg.word_dim);
    let model = hgat::model::Model::new(&mut store, cfg.model_config(37), vocab, table, &mut rng).unwrap();
    // biases start at zero; draw them so their gradients are exercised off the origin
    let ids: Vec<_> = store.iter().filter(|(_, n, _)| n.ends_with("bias")).map(|(id, _, v)| (id, v.dim())).collect();
    for (id, (r, c)) in ids {
        *store.get_mut(id) = random_matrix(&mut rng, r, c).mapv(|x| 0.1 * x);
    }
    (store, model)
}

/// Mean BCE of every pair of the toy dialogue through the whole model.
pub fn model_gradient_check(seed: u64) -> (f64, String) {
    let ad = emma_dialogue();
    let (store, model) = tiny_model(&ad, seed);
    let pairs: Vec<usize> = (0..ad.dialogue.relation_instances.len()).collect();
    let insts: Vec<_> = ad.dialogue.relation_instances.iter().collect();
    let gold: Array2<f64> = hgat::model::gold_matrix(&insts, 37);
    let loss = move |tape: &mut Tape<'_, f64>| {
        let out = model.forward_group(tape, &ad, &pairs, usize::MAX, None).unwrap();
        tape.bce_with_logits(out.logits, gold.clone())
    };
    gradient_check(&store, &loss, 6, seed)
}
