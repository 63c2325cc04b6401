use std::path::Path;
use std::process::{Command, Output};

use hgat::corpus::{to_dialogre_json, RelationVocabulary, Split};
use hgat::synthetic::synthetic_corpus;

const TINY: &[&str] = &[
    "width=20",
    "heads=2",
    "edge_dim=4",
    "word_dim=8",
    "pos_dim=4",
    "type_dim=4",
    "local_hidden=6",
    "global_hidden=6",
    "local_layers=1",
    "global_layers=1",
    "epochs=2",
    "batch_size=4",
];

fn hgat(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hgat"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let labels = RelationVocabulary::dialogre();
    std::fs::create_dir(dir.path().join("data")).unwrap();
    for (split, n, seed) in [(Split::Train, 6, 1), (Split::Dev, 3, 2), (Split::Test, 3, 3)] {
        let d = synthetic_corpus(n, 5, 2, split, seed, &labels);
        std::fs::write(dir.path().join("data").join(split.file_name()), to_dialogre_json(&d, &labels)).unwrap();
    }
    dir
}

fn with_sets<'a>(args: &[&'a str], sets: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    for s in sets {
        v.push("--set");
        v.push(s);
    }
    v
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = hgat(dir.path(), &["stats", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn bad_override_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = hgat(dir.path(), &["params", "--set", "no_such_key=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no_such_key"));
}

#[test]
fn missing_corpus_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = hgat(dir.path(), &["stats", "--split", "train"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("data_dir"), "{}", stderr(&o));
}

#[test]
fn stats_counts_conversations_and_labels() {
    let dir = workspace();
    let o = hgat(dir.path(), &["stats", "--split", "train", "--json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["train"]["conversations"], 6);
    assert_eq!(v["train"]["argument_pairs"], 12);

    let o = hgat(dir.path(), &["stats", "--labels"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 38);
    assert!(text.lines().any(|l| l.starts_with("unanswerable") && l.split_whitespace().nth(1) == Some("6")));
}

#[test]
fn params_reports_the_default_budget() {
    let dir = tempfile::tempdir().unwrap();
    let o = hgat(dir.path(), &["params"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o).lines().find(|l| l.starts_with("model (excl. word table)")).unwrap().to_string();
    let n: f64 = line.split_whitespace().last().unwrap().parse().unwrap();
    assert!((n - 4.0e6).abs() <= 0.15 * 4.0e6, "{n}");
    assert!(std::fs::read_dir(dir.path().join("runs")).unwrap().count() == 1);
}

#[test]
fn preprocess_writes_caches() {
    let dir = workspace();
    let o = hgat(dir.path(), &["preprocess", "--workers", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for s in ["train", "dev", "test"] {
        assert!(dir.path().join("cache").join(format!("{s}.rule-1.v1.cache")).is_file());
    }
}

#[test]
fn train_eval_predict_round_trip() {
    let dir = workspace();
    let o = hgat(dir.path(), &with_sets(&["train"], TINY));
    assert!(o.status.success(), "{}", stderr(&o));
    let train_out = stdout(&o);
    let ckpt = train_out.lines().find_map(|l| l.strip_prefix("checkpoint\t")).unwrap().to_string();
    let macro_line = train_out.lines().find(|l| l.starts_with("macro_f1\t")).unwrap().to_string();

    let run = Path::new(&ckpt).parent().unwrap().to_path_buf();
    let config = std::fs::read_to_string(dir.path().join(&run).join("config.toml")).unwrap();
    assert!(config.contains("width = 20"));
    let log = std::fs::read_to_string(dir.path().join(&run).join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    let best = log
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["dev_f1"].as_f64().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(macro_line.ends_with(&format!("{best:.4}")), "{macro_line} vs {best}");

    let eval = |setting: &str| hgat(dir.path(), &["eval", "--split", "dev", "--setting", setting, "--checkpoint", &ckpt]);
    let a = eval("standard");
    assert!(a.status.success(), "{}", stderr(&a));
    assert!(stdout(&a).contains(&macro_line));
    assert_eq!(stdout(&a), stdout(&eval("standard")));
    let c = eval("conversational");
    assert!(c.status.success(), "{}", stderr(&c));
    assert!(stdout(&c).contains("macro_f1c\t"));

    std::fs::write(dir.path().join("d.txt"), "Speaker 1: Emma is my baby daughter .\nSpeaker 2: wow\n").unwrap();
    let o = hgat(
        dir.path(),
        &["predict", "--dialogue", "d.txt", "--subject", "Emma", "--object", "Emma", "--graph-dump", "g.json", "--checkpoint", &ckpt],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 37);
    assert!(lines.iter().any(|l| l.ends_with('*')));
    let graph: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("g.json")).unwrap()).unwrap();
    assert_eq!(graph["utterances"].as_array().unwrap().len(), 2);
}

#[test]
fn experiment_matrix_writes_tables() {
    let dir = workspace();
    std::fs::write(
        dir.path().join("m.toml"),
        "[[row]]\nlabel = \"full\"\n[[row]]\nlabel = \"Strategy1\"\nschedule = \"A\"\n",
    )
    .unwrap();
    let mut args = with_sets(&["experiment", "--matrix", "m.toml"], TINY);
    args.extend(["--set", "epochs=1"]);
    let o = hgat(dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.lines().next().unwrap().starts_with("label"));
    assert!(out.contains("Strategy1"));
    assert_eq!(out.lines().filter(|l| l.ends_with("ok")).count(), 2);
}

#[test]
fn eval_without_checkpoint_is_a_usage_error() {
    let dir = workspace();
    let o = hgat(dir.path(), &["eval"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("checkpoint"));
}
