use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hgat::annotate::{AnnotatedDialogue, Annotator, ExternalAnnotator, RuleAnnotator};
use hgat::cache::load_or_annotate;
use hgat::checkpoint::TrainedModel;
use hgat::config::RunConfig;
use hgat::corpus::{corpus_stats, label_distribution, load_corpus, LabelTable, RelationVocabulary, Split};
use hgat::traineval::{
    build_vocab, evaluate_conversational, evaluate_standard, init_model, parse_matrix, predict_pair, results_text,
    results_tsv, run_experiment_matrix, train, ExperimentData, TrainOptions,
};
use hgat::vectors::{PretrainedVectors, WordVocab};
use hgat::Error;

#[derive(Parser)]
#[command(name = "hgat", version, about = "Heterogeneous graph attention network for dialogue relation extraction")]
struct Cli {
    /// Flat TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads for preprocess and eval.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Annotate the corpus splits and write the annotation cache.
    Preprocess {
        #[arg(long)]
        split: Option<Split>,
    },
    /// Corpus statistics, or per-label counts with --labels.
    Stats {
        #[arg(long)]
        split: Option<Split>,
        #[arg(long)]
        labels: bool,
        #[arg(long)]
        json: bool,
    },
    /// Train on the train split, selecting the checkpoint by dev F1.
    Train,
    /// Evaluate a checkpoint.
    Eval {
        #[arg(long, default_value = "dev")]
        split: Split,
        #[arg(long, value_enum, default_value = "standard")]
        setting: Setting,
        #[command(flatten)]
        ckpt: CheckpointArg,
    },
    /// Rank relation labels for one argument pair of a dialogue.
    Predict {
        /// JSON array of turns, or one "Speaker N: text" turn per line.
        #[arg(long)]
        dialogue: PathBuf,
        #[arg(long)]
        subject: String,
        #[arg(long)]
        object: String,
        /// Write the constructed graph as JSON.
        #[arg(long)]
        graph_dump: Option<PathBuf>,
        #[command(flatten)]
        ckpt: CheckpointArg,
    },
    /// Trainable parameter counts per module.
    Params {
        #[command(flatten)]
        ckpt: CheckpointArg,
    },
    /// Train and evaluate every row of an experiment matrix.
    Experiment {
        #[arg(long)]
        matrix: PathBuf,
    },
}

#[derive(Args)]
struct CheckpointArg {
    /// Checkpoint file; overrides the `checkpoint` config key.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Setting {
    Standard,
    Conversational,
}

/// Failure with the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => 2,
            Error::Numeric(_) => 4,
            _ => 3,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

fn data(message: impl Into<String>) -> Failure {
    Failure { code: 3, message: message.into() }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn effective_config(cli: &Cli) -> CliResult<RunConfig> {
    let base = match &cli.config {
        Some(p) if !p.exists() => return Err(usage(format!("--config: {} not found", p.display()))),
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut cfg = base.with_overrides(cli.overrides.iter().map(String::as_str))?;
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult {
    let mut cfg = effective_config(&cli)?;
    match &cli.command {
        Command::Preprocess { split } => {
            set_workers(cfg.workers)?;
            let splits = split.map_or_else(|| Split::ALL.to_vec(), |s| vec![s]);
            check_splits(&cfg, &splits)?;
            let backend = make_backend(&cfg)?;
            for s in splits {
                let (d, path) = load_split(&cfg, s, backend.as_ref(), &RelationVocabulary::dialogre())?;
                println!("{s}\t{} dialogues\t{}", d.len(), path.display());
            }
            Ok(())
        }
        Command::Stats { split, labels, json } => stats(&cfg, *split, *labels, *json),
        Command::Train => train_command(&cfg),
        Command::Eval { split, setting, ckpt } => {
            set_workers(cfg.workers)?;
            apply_checkpoint(&mut cfg, ckpt);
            eval_command(&cfg, *split, *setting)
        }
        Command::Predict { dialogue, subject, object, graph_dump, ckpt } => {
            apply_checkpoint(&mut cfg, ckpt);
            predict_command(&cfg, dialogue, subject, object, graph_dump.as_deref())
        }
        Command::Params { ckpt } => {
            apply_checkpoint(&mut cfg, ckpt);
            params_command(&cfg)
        }
        Command::Experiment { matrix } => experiment_command(&cfg, matrix),
    }
}

fn set_workers(workers: usize) -> CliResult {
    if workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| usage(format!("--workers: {e}")))?;
    }
    Ok(())
}

fn apply_checkpoint(cfg: &mut RunConfig, arg: &CheckpointArg) {
    if let Some(p) = &arg.checkpoint {
        cfg.checkpoint = p.display().to_string();
    }
}

fn split_path(cfg: &RunConfig, split: Split) -> PathBuf {
    Path::new(&cfg.data_dir).join(split.file_name())
}

fn check_splits(cfg: &RunConfig, splits: &[Split]) -> CliResult {
    for &s in splits {
        let p = split_path(cfg, s);
        if !p.is_file() {
            return Err(data(format!("data_dir: {} not found", p.display())));
        }
    }
    Ok(())
}

fn check_file(field: &str, value: &str) -> CliResult<PathBuf> {
    if value.is_empty() {
        return Err(usage(format!("{field} is not set")));
    }
    let p = PathBuf::from(value);
    if !p.is_file() {
        return Err(data(format!("{field}: {} not found", p.display())));
    }
    Ok(p)
}

fn make_backend(cfg: &RunConfig) -> CliResult<Box<dyn Annotator>> {
    match cfg.backend.as_str() {
        "rule" => Ok(Box::new(RuleAnnotator::new())),
        "external" => {
            let mut parts = cfg.annotator_command.split_whitespace().map(str::to_string);
            let program = parts.next().ok_or_else(|| usage("annotator_command is empty"))?;
            let args: Vec<String> = parts.collect();
            Ok(Box::new(ExternalAnnotator::spawn(&program, &args)?))
        }
        other => Err(usage(format!("backend: unknown annotation backend {other:?} (expected rule or external)"))),
    }
}

fn load_split(
    cfg: &RunConfig,
    split: Split,
    backend: &dyn Annotator,
    labels: &RelationVocabulary,
) -> CliResult<(Vec<AnnotatedDialogue>, PathBuf)> {
    Ok(load_or_annotate(&split_path(cfg, split), split, labels, backend, Path::new(&cfg.cache_dir))?)
}

fn load_vectors(cfg: &RunConfig, corpora: &[&[AnnotatedDialogue]]) -> CliResult<Option<PretrainedVectors>> {
    if cfg.vectors.is_empty() {
        log::warn!("no pretrained vectors configured; word embeddings start from hashed draws");
        return Ok(None);
    }
    let path = check_file("vectors", &cfg.vectors)?;
    let keep: HashSet<String> = corpora
        .iter()
        .flat_map(|c| c.iter())
        .flat_map(|d| d.utterances.iter().flat_map(|u| u.tokens.iter().map(|t| t.norm.to_lowercase())))
        .collect();
    Ok(Some(PretrainedVectors::load(&path, cfg.train.word_dim, Some(&keep))?))
}

/// Creates `<output_dir>/<timestamp>-seed<seed>-<command>` holding the effective config.
fn run_dir(cfg: &RunConfig, command: &str) -> CliResult<PathBuf> {
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    let dir = Path::new(&cfg.output_dir).join(format!("{stamp}-seed{}-{command}", cfg.train.seed));
    std::fs::create_dir_all(&dir).map_err(|e| data(format!("output_dir: {}: {e}", dir.display())))?;
    write_file(&dir.join("config.toml"), &cfg.to_toml())?;
    Ok(dir)
}

fn write_file(path: &Path, text: &str) -> CliResult {
    std::fs::write(path, text).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn stats(cfg: &RunConfig, split: Option<Split>, labels: bool, json: bool) -> CliResult {
    let splits = split.map_or_else(|| Split::ALL.to_vec(), |s| vec![s]);
    check_splits(cfg, &splits)?;
    let vocab = RelationVocabulary::dialogre();
    let mut corpora = Vec::new();
    for &s in &splits {
        corpora.push((s, load_corpus(&split_path(cfg, s), s, &vocab)?));
    }
    let out = if labels {
        let table = LabelTable {
            labels: vocab.labels().to_vec(),
            splits: corpora.iter().map(|(s, d)| (*s, label_distribution(d, &vocab))).collect(),
        };
        if json {
            serde_json::to_string_pretty(&table).expect("table serializes") + "\n"
        } else {
            table.to_string()
        }
    } else {
        let backend = make_backend(cfg)?;
        let mut text = String::new();
        let mut reports = serde_json::Map::new();
        for (s, d) in &corpora {
            let r = corpus_stats(d, backend.as_ref())?;
            text.push_str(&format!("[{s}]\n{r}\n"));
            reports.insert(s.to_string(), serde_json::to_value(&r).expect("report serializes"));
        }
        if json {
            serde_json::to_string_pretty(&reports).expect("report serializes") + "\n"
        } else {
            text
        }
    };
    print!("{out}");
    Ok(())
}

fn train_command(cfg: &RunConfig) -> CliResult {
    check_splits(cfg, &[Split::Train, Split::Dev])?;
    let labels = RelationVocabulary::dialogre();
    let backend = make_backend(cfg)?;
    let (train_set, _) = load_split(cfg, Split::Train, backend.as_ref(), &labels)?;
    let (dev_set, _) = load_split(cfg, Split::Dev, backend.as_ref(), &labels)?;
    let test_set = if split_path(cfg, Split::Test).is_file() {
        load_split(cfg, Split::Test, backend.as_ref(), &labels)?.0
    } else {
        Vec::new()
    };
    let vectors = load_vectors(cfg, &[&train_set, &dev_set, &test_set])?;
    let vocab = build_vocab(&train_set, &[&dev_set, &test_set], vectors.as_ref());
    let dir = run_dir(cfg, "train")?;
    let options = TrainOptions {
        conversational_dev: false,
        log_path: Some(dir.join("train_log.jsonl")),
        checkpoint_path: Some(dir.join("model.ckpt")),
    };
    let outcome = train(&cfg.train, &labels, &train_set, &dev_set, vocab, vectors.as_ref(), &options)?;
    let report = evaluate_standard(&outcome.best, &dev_set)?;
    write_file(&dir.join("dev_report.txt"), &report.to_text())?;
    println!("best epoch\t{}", outcome.best_epoch);
    print!("{}", report.to_text());
    println!("checkpoint\t{}", dir.join("model.ckpt").display());
    Ok(())
}

fn load_checkpoint(cfg: &RunConfig) -> CliResult<TrainedModel> {
    let path = check_file("checkpoint", &cfg.checkpoint)?;
    Ok(TrainedModel::load(&path)?)
}

fn eval_command(cfg: &RunConfig, split: Split, setting: Setting) -> CliResult {
    let tm = load_checkpoint(cfg)?;
    check_splits(cfg, &[split])?;
    let backend = make_backend(cfg)?;
    let (dialogues, _) = load_split(cfg, split, backend.as_ref(), &tm.labels)?;
    let report = match setting {
        Setting::Standard => evaluate_standard(&tm, &dialogues)?,
        Setting::Conversational => evaluate_conversational(&tm, &dialogues)?,
    };
    let text = report.to_text();
    let dir = run_dir(cfg, "eval")?;
    write_file(&dir.join(format!("{split}_report.txt")), &text)?;
    print!("{text}");
    Ok(())
}

fn read_turns(path: &Path) -> CliResult<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| data(format!("--dialogue: {}: {e}", path.display())))?;
    if let Ok(turns) = serde_json::from_str::<Vec<String>>(&text) {
        return Ok(turns);
    }
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect())
}

fn predict_command(cfg: &RunConfig, dialogue: &Path, subject: &str, object: &str, graph_dump: Option<&Path>) -> CliResult {
    let tm = load_checkpoint(cfg)?;
    let turns = read_turns(dialogue)?;
    let backend = make_backend(cfg)?;
    let (prediction, graph) = predict_pair(&tm, backend.as_ref(), &turns, subject, object)?;
    let mut out = String::new();
    for (id, p) in prediction.ranked() {
        let mark = if prediction.labels.contains(&id) { "*" } else { "" };
        out.push_str(&format!("{}\t{p:.4}\t{mark}\n", tm.labels.name(id)));
    }
    let dir = run_dir(cfg, "predict")?;
    write_file(&dir.join("prediction.tsv"), &out)?;
    if let Some(p) = graph_dump {
        write_file(p, &serde_json::to_string_pretty(&graph).expect("graph serializes"))?;
    }
    print!("{out}");
    Ok(())
}

fn params_command(cfg: &RunConfig) -> CliResult {
    let tm = if cfg.checkpoint.is_empty() {
        init_model(&cfg.train, &RelationVocabulary::dialogre(), WordVocab::new(), None)?
    } else {
        load_checkpoint(cfg)?
    };
    let report = tm.model.parameter_report(&tm.params);
    let text = format!("{report}\n");
    let dir = run_dir(cfg, "params")?;
    write_file(&dir.join("params.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn experiment_command(cfg: &RunConfig, matrix: &Path) -> CliResult {
    let text = std::fs::read_to_string(matrix).map_err(|e| data(format!("--matrix: {}: {e}", matrix.display())))?;
    let rows = parse_matrix(&text)?;
    for row in &rows {
        cfg.with_overrides(row.overrides.iter().map(String::as_str))
            .map_err(|e| usage(format!("matrix row {:?}: {e}", row.label)))?;
    }
    check_splits(cfg, &Split::ALL)?;
    let labels = RelationVocabulary::dialogre();
    let backend = make_backend(cfg)?;
    let (train_set, _) = load_split(cfg, Split::Train, backend.as_ref(), &labels)?;
    let (dev_set, _) = load_split(cfg, Split::Dev, backend.as_ref(), &labels)?;
    let (test_set, _) = load_split(cfg, Split::Test, backend.as_ref(), &labels)?;
    let vectors = load_vectors(cfg, &[&train_set, &dev_set, &test_set])?;
    let dir = run_dir(cfg, "experiment")?;
    let results = run_experiment_matrix(
        cfg,
        &rows,
        &ExperimentData { labels: &labels, train: &train_set, dev: &dev_set, test: &test_set, vectors: vectors.as_ref() },
    );
    write_file(&dir.join("results.tsv"), &results_tsv(&results))?;
    let table = results_text(&results);
    write_file(&dir.join("results.txt"), &table)?;
    print!("{table}");
    Ok(())
}
