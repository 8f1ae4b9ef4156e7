//! `probekit` command line.
//!
//! Every command writes into `--out` a `manifest.json` (command line, config
//! echo, seeds, version, input digests, timestamp) next to its results.
//! Everything except the manifest is a pure function of inputs and flags.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{error::ErrorKind, Args, Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::checkpoint::{self, Checkpoint};
use crate::corpus::{self, NliLabel, NliPair, TaggedCorpus};
use crate::embedstore::{self, EmbeddingStore};
use crate::error::{Error, Result};
use crate::ner_probe::{self, EvalReport, NerConfig, NerData};
use crate::nli_probe::{self, NliConfig, NliData};
use crate::relation_analysis::{self as analysis, Metric, RelationSet, VectorRow};
use crate::trainer::{self, EpochRecord, TrainConfig};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

#[derive(Parser, Debug)]
#[command(name = "probekit", version = VERSION, about = "Probing heads over frozen contextual embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the CRF tagging probe, one model per seed.
    TrainNer(TrainNerArgs),
    /// Evaluate tagging checkpoints on a corpus.
    EvalNer(EvalNerArgs),
    /// Train the bilinear relation probe, one model per seed.
    TrainNli(TrainNliArgs),
    /// Evaluate relation-probe checkpoints on a corpus.
    EvalNli(EvalNliArgs),
    /// Nearest-neighbour same-type proportions of relation reps.
    AnalyzeNn(AnalyzeNnArgs),
    /// Extract relation reps at annotated token pairs.
    ExportRelations(ExportRelationsArgs),
    /// Write vectors as a tab-separated table.
    ExportVectors(ExportVectorsArgs),
    /// Summarize an embedding store.
    StoreInfo(StoreInfoArgs),
}

#[derive(Args, Debug, Default)]
struct TrainFlags {
    /// `key = value` file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    learning_rate: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    max_epochs: Option<String>,
    #[arg(long)]
    patience: Option<String>,
    /// Comma-separated seed list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    precision: Option<String>,
    #[arg(long)]
    shuffle: Option<String>,
}

impl TrainFlags {
    fn overrides(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("learning_rate", &self.learning_rate),
            ("batch_size", &self.batch_size),
            ("max_epochs", &self.max_epochs),
            ("patience", &self.patience),
            ("seeds", &self.seeds),
            ("precision", &self.precision),
            ("shuffle", &self.shuffle),
        ]
    }
}

#[derive(Args, Debug)]
struct TrainNerArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Alternative gold boundaries for the training corpus.
    #[arg(long)]
    train_alt: Option<PathBuf>,
    #[arg(long)]
    dev_alt: Option<PathBuf>,
    #[arg(long)]
    test_alt: Option<PathBuf>,
    /// Embedding store for the training corpus, and for dev/test unless given.
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    dev_store: Option<PathBuf>,
    #[arg(long)]
    test_store: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    bio_constraint: Option<String>,
    #[command(flatten)]
    train_flags: TrainFlags,
}

#[derive(Args, Debug)]
struct EvalNerArgs {
    /// One or more checkpoints; metrics are reported per checkpoint and averaged.
    #[arg(long, required = true, num_args = 1..)]
    checkpoint: Vec<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    alt: Option<PathBuf>,
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainNliArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    dev_store: Option<PathBuf>,
    #[arg(long)]
    test_store: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    rank: Option<String>,
    #[arg(long)]
    label_bias: Option<String>,
    #[arg(long)]
    tie_mix: Option<String>,
    #[command(flatten)]
    train_flags: TrainFlags,
}

#[derive(Args, Debug)]
struct EvalNliArgs {
    #[arg(long, required = true, num_args = 1..)]
    checkpoint: Vec<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    store: PathBuf,
    /// Relation annotations; adds accuracy on the annotated pairs.
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AnalyzeNnArgs {
    /// Relation rep stores, one per seed.
    #[arg(long, required = true, num_args = 1..)]
    reps: Vec<PathBuf>,
    /// Sidecar type files, one per `--reps`.
    #[arg(long, required = true, num_args = 1..)]
    types: Vec<PathBuf>,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value = "cosine")]
    metric: Metric,
    /// Reps to compare against with a two-proportion z test.
    #[arg(long, num_args = 1..)]
    baseline_reps: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    baseline_types: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExportRelationsArgs {
    #[arg(long, required = true, num_args = 1..)]
    checkpoint: Vec<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ExportVectorsArgs {
    /// Relation rep store to export (with `--types`).
    #[arg(long, requires = "types", conflicts_with_all = ["data", "token"])]
    reps: Option<PathBuf>,
    #[arg(long)]
    types: Option<PathBuf>,
    /// Tagged corpus whose occurrences of `--token` are exported.
    #[arg(long, requires_all = ["token", "store"])]
    data: Option<PathBuf>,
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    token: Option<String>,
    /// Tagging checkpoint whose layer mix is applied; default is the layer mean.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Free-form value for the `tag` column.
    #[arg(long, default_value = "")]
    tag: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct StoreInfoArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{}", e.render());
                    1
                }
            };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return 1;
    }
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(cli.command, &args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("PROBE_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("PROBE_THREADS must be a non-negative integer, got {value:?}")))?;
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn dispatch(command: Command, args: &[String]) -> Result<()> {
    match command {
        Command::TrainNer(a) => train_ner(a, args),
        Command::EvalNer(a) => eval_ner(a, args),
        Command::TrainNli(a) => train_nli(a, args),
        Command::EvalNli(a) => eval_nli(a, args),
        Command::AnalyzeNn(a) => analyze_nn(a, args),
        Command::ExportRelations(a) => export_relations(a, args),
        Command::ExportVectors(a) => export_vectors(a, args),
        Command::StoreInfo(a) => store_info(a, args),
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

struct Manifest {
    command: &'static str,
    args: Vec<String>,
    config: BTreeMap<String, String>,
    seeds: Vec<u64>,
    inputs: BTreeMap<String, Value>,
}

impl Manifest {
    fn new(command: &'static str, args: &[String]) -> Self {
        Self {
            command,
            args: args.to_vec(),
            config: BTreeMap::new(),
            seeds: Vec::new(),
            inputs: BTreeMap::new(),
        }
    }

    fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        let entry = json!({"path": path.display().to_string(), "sha256": sha256_file(path)?});
        self.inputs.insert(role.to_string(), entry);
        Ok(())
    }

    fn inputs(&mut self, role: &str, paths: &[PathBuf]) -> Result<()> {
        for (i, p) in paths.iter().enumerate() {
            self.input(&format!("{role}[{i}]"), p)?;
        }
        Ok(())
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let manifest = json!({
            "command": self.command,
            "args": self.args,
            "version": VERSION,
            "config": self.config,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "created_unix": created,
        });
        write_text(dir, "manifest.json", &(serde_json::to_string_pretty(&manifest).unwrap() + "\n"))
    }
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn jsonl<T: serde::Serialize>(records: &[T]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("serializable") + "\n")
        .collect()
}

/// Applies the config file, then flag overrides, to the trainer config and a
/// model config.
fn resolve_config(
    flags: &TrainFlags,
    model_flags: &[(&'static str, &Option<String>)],
    model_set: &mut dyn FnMut(&str, &str) -> Result<bool>,
) -> Result<TrainConfig> {
    let mut train = TrainConfig::default();
    let mut entries: Vec<(String, String)> = Vec::new();
    if let Some(path) = &flags.config {
        entries.extend(trainer::parse_key_values(&fs::read_to_string(path)?)?);
    }
    for (key, value) in flags.overrides().into_iter().chain(model_flags.iter().copied()) {
        if let Some(v) = value {
            entries.push((key.to_string(), v.clone()));
        }
    }
    for (key, value) in &entries {
        if !(train.set(key, value)? || model_set(key, value)?) {
            return Err(Error::Config(format!("unknown config key {key:?}")));
        }
    }
    train.validate()?;
    Ok(train)
}

fn load_tagged(path: &Path, alt: Option<&Path>, manifest: &mut Manifest, role: &str) -> Result<TaggedCorpus> {
    manifest.input(role, path)?;
    if let Some(a) = alt {
        manifest.input(&format!("{role}_alt"), a)?;
    }
    corpus::parse_tagged_corpus(path, alt)
}

fn load_store(path: &Path, manifest: &mut Manifest, role: &str) -> Result<EmbeddingStore> {
    manifest.input(role, path)?;
    embedstore::read_store(path)
}

fn load_pairs(path: &Path, manifest: &mut Manifest, role: &str) -> Result<Vec<NliPair>> {
    manifest.input(role, path)?;
    corpus::parse_nli_corpus(path)
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn trace_records(seed: u64, trace: &[EpochRecord]) -> Vec<Value> {
    trace
        .iter()
        .map(|r| json!({"seed": seed, "epoch": r.epoch, "train_loss": r.train_loss, "dev_metric": r.dev_metric}))
        .collect()
}

fn ner_record(seed: Option<u64>, split: &str, r: &EvalReport) -> Value {
    json!({
        "seed": seed, "split": split, "tp": r.tp, "fp": r.fp, "fn": r.fn_,
        "precision": r.precision, "recall": r.recall, "f1": r.f1,
    })
}

fn ner_table(rows: &[(String, &str, EvalReport)], mean: &[(&str, f64)]) -> String {
    let mut out = format!(
        "{:<8}{:<6}{:>7}{:>7}{:>7}{:>11}{:>9}{:>9}\n",
        "seed", "split", "tp", "fp", "fn", "precision", "recall", "f1"
    );
    for (seed, split, r) in rows {
        out.push_str(&format!(
            "{seed:<8}{split:<6}{:>7}{:>7}{:>7}{:>11.4}{:>9.4}{:>9.4}\n",
            r.tp, r.fp, r.fn_, r.precision, r.recall, r.f1
        ));
    }
    for (split, f1) in mean {
        out.push_str(&format!("{:<8}{split:<6}{:>50.4}\n", "mean", f1));
    }
    out
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn train_ner(a: TrainNerArgs, args: &[String]) -> Result<()> {
    let mut ner = NerConfig::default();
    let model_flags = [
        ("hidden", &a.hidden),
        ("activation", &a.activation),
        ("bio_constraint", &a.bio_constraint),
    ];
    let train_cfg = resolve_config(&a.train_flags, &model_flags, &mut |k, v| ner.set(k, v))?;
    let mut manifest = Manifest::new("train-ner", args);
    if let Some(c) = &a.train_flags.config {
        manifest.input("config", c)?;
    }
    let train = load_tagged(&a.train, a.train_alt.as_deref(), &mut manifest, "train")?;
    let dev = load_tagged(&a.dev, a.dev_alt.as_deref(), &mut manifest, "dev")?;
    let test = a
        .test
        .as_deref()
        .map(|t| load_tagged(t, a.test_alt.as_deref(), &mut manifest, "test"))
        .transpose()?;
    let store = load_store(&a.store, &mut manifest, "store")?;
    let dev_store = a.dev_store.as_deref().map(|p| load_store(p, &mut manifest, "dev_store")).transpose()?;
    let test_store = a.test_store.as_deref().map(|p| load_store(p, &mut manifest, "test_store")).transpose()?;
    create_out(&a.out)?;

    let data = NerData {
        train: (&train, &store),
        dev: (&dev, dev_store.as_ref().unwrap_or(&store)),
        test: test.as_ref().map(|t| (t, test_store.as_ref().unwrap_or(&store))),
    };
    let summary = ner_probe::run_seeds(&ner, &train_cfg, data)?;

    let mut records = Vec::new();
    let mut rows = Vec::new();
    let mut trace = Vec::new();
    for (seed, run) in &summary.per_seed {
        checkpoint::ner_checkpoint(&run.outcome.model, *seed, &train_cfg).write(&a.out.join(format!("model_seed{seed}.ckpt")))?;
        records.push(ner_record(Some(*seed), "dev", &run.dev));
        rows.push((seed.to_string(), "dev", run.dev));
        if let Some(t) = &run.test {
            records.push(ner_record(Some(*seed), "test", t));
            rows.push((seed.to_string(), "test", *t));
        }
        trace.extend(trace_records(*seed, &run.outcome.trace));
    }
    let dev_mean = mean(&summary.per_seed.iter().map(|(_, r)| r.dev.f1).collect::<Vec<_>>());
    let mut means = vec![("dev", dev_mean)];
    records.push(json!({"seed": null, "split": "dev", "mean_f1": dev_mean}));
    if test.is_some() {
        records.push(json!({"seed": null, "split": "test", "mean_f1": summary.mean}));
        means.push(("test", summary.mean));
    }
    let table = ner_table(&rows, &means);
    write_text(&a.out, "metrics.jsonl", &jsonl(&records))?;
    write_text(&a.out, "metrics.txt", &table)?;
    write_text(&a.out, "trace.jsonl", &jsonl(&trace))?;
    manifest.config = train_cfg.to_key_values().into_iter().chain(ner.to_key_values()).collect();
    manifest.seeds = train_cfg.seeds.clone();
    manifest.write(&a.out)?;
    print!("{table}");
    Ok(())
}

fn eval_ner(a: EvalNerArgs, args: &[String]) -> Result<()> {
    let mut manifest = Manifest::new("eval-ner", args);
    manifest.inputs("checkpoint", &a.checkpoint)?;
    let data = load_tagged(&a.data, a.alt.as_deref(), &mut manifest, "data")?;
    let store = load_store(&a.store, &mut manifest, "store")?;
    create_out(&a.out)?;
    let mut records = Vec::new();
    let mut rows = Vec::new();
    let mut predictions = Vec::new();
    for path in &a.checkpoint {
        let ckpt = Checkpoint::read(path)?;
        let seed = ckpt.seed()?;
        let model = checkpoint::ner_from_checkpoint(&ckpt)?;
        let preds = ner_probe::predict_corpus(&model, &data, &store)?;
        let report = ner_probe::evaluate(&preds, &data.entities)?;
        records.push(ner_record(Some(seed), "eval", &report));
        rows.push((seed.to_string(), "eval", report));
        predictions.extend(preds.iter().map(|p| json!({"seed": seed, "sentence_id": p.sentence_id, "spans": p.spans})));
        manifest.seeds.push(seed);
    }
    let f1 = mean(&rows.iter().map(|r| r.2.f1).collect::<Vec<_>>());
    records.push(json!({"seed": null, "split": "eval", "mean_f1": f1}));
    let table = ner_table(&rows, &[("eval", f1)]);
    write_text(&a.out, "metrics.jsonl", &jsonl(&records))?;
    write_text(&a.out, "metrics.txt", &table)?;
    write_text(&a.out, "predictions.jsonl", &jsonl(&predictions))?;
    manifest.write(&a.out)?;
    print!("{table}");
    Ok(())
}

fn accuracy_table(rows: &[(String, String, f64)]) -> String {
    let mut out = format!("{:<8}{:<10}{:>10}\n", "seed", "split", "accuracy");
    for (seed, split, acc) in rows {
        out.push_str(&format!("{seed:<8}{split:<10}{acc:>10.4}\n"));
    }
    out
}

fn train_nli(a: TrainNliArgs, args: &[String]) -> Result<()> {
    let mut nli = NliConfig::default();
    let model_flags = [("rank", &a.rank), ("label_bias", &a.label_bias), ("tie_mix", &a.tie_mix)];
    let train_cfg = resolve_config(&a.train_flags, &model_flags, &mut |k, v| nli.set(k, v))?;
    let mut manifest = Manifest::new("train-nli", args);
    if let Some(c) = &a.train_flags.config {
        manifest.input("config", c)?;
    }
    let train = load_pairs(&a.train, &mut manifest, "train")?;
    let dev = load_pairs(&a.dev, &mut manifest, "dev")?;
    let test = a.test.as_deref().map(|t| load_pairs(t, &mut manifest, "test")).transpose()?;
    let store = load_store(&a.store, &mut manifest, "store")?;
    let dev_store = a.dev_store.as_deref().map(|p| load_store(p, &mut manifest, "dev_store")).transpose()?;
    let test_store = a.test_store.as_deref().map(|p| load_store(p, &mut manifest, "test_store")).transpose()?;
    create_out(&a.out)?;

    let data = NliData {
        train: (&train, &store),
        dev: (&dev, dev_store.as_ref().unwrap_or(&store)),
        test: test.as_deref().map(|t| (t, test_store.as_ref().unwrap_or(&store))),
    };
    let summary = nli_probe::run_seeds(&nli, &train_cfg, data)?;
    let mut records = Vec::new();
    let mut rows = Vec::new();
    let mut trace = Vec::new();
    for (seed, run) in &summary.per_seed {
        checkpoint::nli_checkpoint(&run.outcome.model, *seed, &train_cfg).write(&a.out.join(format!("model_seed{seed}.ckpt")))?;
        records.push(json!({"seed": seed, "split": "dev", "accuracy": run.dev_accuracy}));
        rows.push((seed.to_string(), "dev".to_string(), run.dev_accuracy));
        if let Some(t) = run.test_accuracy {
            records.push(json!({"seed": seed, "split": "test", "accuracy": t}));
            rows.push((seed.to_string(), "test".to_string(), t));
        }
        trace.extend(trace_records(*seed, &run.outcome.trace));
    }
    let dev_mean = mean(&summary.per_seed.iter().map(|(_, r)| r.dev_accuracy).collect::<Vec<_>>());
    records.push(json!({"seed": null, "split": "dev", "mean_accuracy": dev_mean}));
    rows.push(("mean".into(), "dev".into(), dev_mean));
    if test.is_some() {
        records.push(json!({"seed": null, "split": "test", "mean_accuracy": summary.mean}));
        rows.push(("mean".into(), "test".into(), summary.mean));
    }
    let table = accuracy_table(&rows);
    write_text(&a.out, "metrics.jsonl", &jsonl(&records))?;
    write_text(&a.out, "metrics.txt", &table)?;
    write_text(&a.out, "trace.jsonl", &jsonl(&trace))?;
    manifest.config = train_cfg.to_key_values().into_iter().chain(nli.to_key_values()).collect();
    manifest.seeds = train_cfg.seeds.clone();
    manifest.write(&a.out)?;
    print!("{table}");
    Ok(())
}

fn eval_nli(a: EvalNliArgs, args: &[String]) -> Result<()> {
    let mut manifest = Manifest::new("eval-nli", args);
    manifest.inputs("checkpoint", &a.checkpoint)?;
    let pairs = load_pairs(&a.data, &mut manifest, "data")?;
    let store = load_store(&a.store, &mut manifest, "store")?;
    let subset: Option<Vec<String>> = match &a.annotations {
        Some(p) => {
            manifest.input("annotations", p)?;
            Some(corpus::parse_relation_annotations(p, &pairs)?.into_iter().map(|r| r.pair_id).collect())
        }
        None => None,
    };
    create_out(&a.out)?;
    let gold: HashMap<String, NliLabel> = pairs.iter().map(|p| (p.id.clone(), p.label)).collect();
    let mut records = Vec::new();
    let mut rows = Vec::new();
    let mut predictions = Vec::new();
    let (mut accs, mut subset_accs) = (Vec::new(), Vec::new());
    for path in &a.checkpoint {
        let ckpt = Checkpoint::read(path)?;
        let seed = ckpt.seed()?;
        let model = checkpoint::nli_from_checkpoint(&ckpt)?;
        let predicted = nli_probe::predict_pairs(&model, &pairs, &store)?;
        let acc = nli_probe::accuracy(&predicted, &pairs);
        accs.push(acc);
        records.push(json!({"seed": seed, "split": "eval", "accuracy": acc}));
        rows.push((seed.to_string(), "eval".to_string(), acc));
        if let Some(ids) = &subset {
            let by_id: HashMap<String, NliLabel> = pairs.iter().map(|p| p.id.clone()).zip(predicted.iter().copied()).collect();
            let s = analysis::subset_accuracy(&by_id, ids, &gold)?;
            subset_accs.push(s);
            records.push(json!({"seed": seed, "split": "annotated", "accuracy": s}));
            rows.push((seed.to_string(), "annotated".to_string(), s));
        }
        predictions.extend(
            pairs
                .iter()
                .zip(&predicted)
                .map(|(p, l)| json!({"seed": seed, "pair_id": p.id, "label": l.as_str()})),
        );
        manifest.seeds.push(seed);
    }
    records.push(json!({"seed": null, "split": "eval", "mean_accuracy": mean(&accs)}));
    rows.push(("mean".into(), "eval".into(), mean(&accs)));
    if !subset_accs.is_empty() {
        records.push(json!({"seed": null, "split": "annotated", "mean_accuracy": mean(&subset_accs)}));
        rows.push(("mean".into(), "annotated".into(), mean(&subset_accs)));
    }
    let table = accuracy_table(&rows);
    write_text(&a.out, "metrics.jsonl", &jsonl(&records))?;
    write_text(&a.out, "metrics.txt", &table)?;
    write_text(&a.out, "predictions.jsonl", &jsonl(&predictions))?;
    manifest.write(&a.out)?;
    print!("{table}");
    Ok(())
}

fn export_relations(a: ExportRelationsArgs, args: &[String]) -> Result<()> {
    let mut manifest = Manifest::new("export-relations", args);
    manifest.inputs("checkpoint", &a.checkpoint)?;
    let pairs = load_pairs(&a.data, &mut manifest, "data")?;
    let store = load_store(&a.store, &mut manifest, "store")?;
    manifest.input("annotations", &a.annotations)?;
    let annotations = corpus::parse_relation_annotations(&a.annotations, &pairs)?;
    create_out(&a.out)?;
    for path in &a.checkpoint {
        let ckpt = Checkpoint::read(path)?;
        let seed = ckpt.seed()?;
        let model = checkpoint::nli_from_checkpoint(&ckpt)?;
        let reps = nli_probe::extract_relation_reps(&model, &annotations, &pairs, &store)?;
        let set = RelationSet { seed: Some(seed), reps };
        analysis::write_relation_reps(
            &set,
            &a.out.join(format!("relations_seed{seed}.pte")),
            &a.out.join(format!("relations_seed{seed}.jsonl")),
        )?;
        println!("seed {seed}: {} relation reps", set.reps.len());
        manifest.seeds.push(seed);
    }
    manifest.write(&a.out)
}

fn load_relation_sets(reps: &[PathBuf], types: &[PathBuf], manifest: &mut Manifest, role: &str) -> Result<Vec<RelationSet>> {
    if reps.len() != types.len() {
        return Err(Error::validation(format!(
            "{} rep files but {} type files",
            reps.len(),
            types.len()
        )));
    }
    manifest.inputs(&format!("{role}_reps"), reps)?;
    manifest.inputs(&format!("{role}_types"), types)?;
    reps.iter()
        .zip(types)
        .map(|(r, t)| analysis::read_relation_reps(r, t))
        .collect()
}

fn analyze_sets(sets: &[RelationSet], k: usize, metric: Metric) -> Result<analysis::SeedAveragedReport> {
    let reports = sets
        .iter()
        .map(|s| analysis::knn_same_type(&analysis::labeled_relations(&s.reps)?, k, metric))
        .collect::<Result<Vec<_>>>()?;
    analysis::average_reports(reports)
}

fn analyze_nn(a: AnalyzeNnArgs, args: &[String]) -> Result<()> {
    let mut manifest = Manifest::new("analyze-nn", args);
    let sets = load_relation_sets(&a.reps, &a.types, &mut manifest, "main")?;
    let report = analyze_sets(&sets, a.k, a.metric)?;
    let tests = if a.baseline_reps.is_empty() && a.baseline_types.is_empty() {
        None
    } else {
        let base = load_relation_sets(&a.baseline_reps, &a.baseline_types, &mut manifest, "baseline")?;
        let base_report = analyze_sets(&base, a.k, a.metric)?;
        Some(analysis::compare_reports(&pooled(&report), &pooled(&base_report))?)
    };
    let seeds: Vec<String> = sets
        .iter()
        .enumerate()
        .map(|(i, s)| s.seed.map_or_else(|| format!("#{i}"), |v| v.to_string()))
        .collect();
    let text = analysis::format_report(&report, &seeds, tests.as_ref());
    print!("{text}");
    if let Some(out) = &a.out {
        create_out(out)?;
        let record = json!({
            "k": a.k,
            "metric": a.metric,
            "seeds": seeds,
            "per_seed": report.per_seed,
            "mean_per_type": report.mean_per_type,
            "mean_overall": report.mean_overall,
            "z_tests": tests,
        });
        write_text(out, "nn_report.json", &(serde_json::to_string_pretty(&record).unwrap() + "\n"))?;
        write_text(out, "nn_report.txt", &text)?;
        manifest.config = [("k".to_string(), a.k.to_string()), ("metric".to_string(), a.metric.to_string())].into();
        manifest.seeds = sets.iter().filter_map(|s| s.seed).collect();
        manifest.write(out)?;
    }
    Ok(())
}

/// Neighbour counts summed over seeds, for the z test.
fn pooled(report: &analysis::SeedAveragedReport) -> analysis::NnReport {
    let mut total = report.per_seed[0].clone();
    for r in &report.per_seed[1..] {
        for (label, s) in &r.per_type {
            let t = total.per_type.entry(label.clone()).or_insert_with(|| analysis::LabelStats {
                count: 0,
                same_neighbors: 0,
                total_neighbors: 0,
                proportion: 0.0,
            });
            t.count += s.count;
            t.same_neighbors += s.same_neighbors;
            t.total_neighbors += s.total_neighbors;
        }
        total.same_neighbors += r.same_neighbors;
        total.total_neighbors += r.total_neighbors;
    }
    total
}

fn export_vectors(a: ExportVectorsArgs, args: &[String]) -> Result<()> {
    let mut manifest = Manifest::new("export-vectors", args);
    let rows: Vec<VectorRow> = if let (Some(reps), Some(types)) = (&a.reps, &a.types) {
        manifest.input("reps", reps)?;
        manifest.input("types", types)?;
        let set = analysis::read_relation_reps(reps, types)?;
        set.reps
            .iter()
            .map(|r| VectorRow {
                id: r.key(),
                label: r.relation_type.map(|t| t.to_string()).unwrap_or_default(),
                in_parens: None,
                tag: a.tag.clone(),
                values: r.values.clone(),
            })
            .collect()
    } else if let (Some(data), Some(store), Some(token)) = (&a.data, &a.store, &a.token) {
        let corpus = load_tagged(data, None, &mut manifest, "data")?;
        let store = load_store(store, &mut manifest, "store")?;
        let mix = match &a.checkpoint {
            Some(p) => {
                manifest.input("checkpoint", p)?;
                Some(checkpoint::ner_from_checkpoint(&Checkpoint::read(p)?)?.mix)
            }
            None => None,
        };
        analysis::token_vector_rows(&corpus.sentences, &store, token, mix.as_ref(), &a.tag)?
    } else {
        return Err(Error::validation("export-vectors needs --reps/--types or --data/--store/--token"));
    };
    create_out(&a.out)?;
    analysis::export_vectors(&rows, &a.out.join("vectors.tsv"))?;
    manifest.write(&a.out)?;
    println!("{} vectors written", rows.len());
    Ok(())
}

fn store_info(a: StoreInfoArgs, args: &[String]) -> Result<()> {
    let store = embedstore::read_store(&a.store)?;
    let mut layers: BTreeMap<usize, usize> = BTreeMap::new();
    let mut dims: BTreeMap<usize, usize> = BTreeMap::new();
    let mut lengths: BTreeMap<usize, usize> = BTreeMap::new();
    for r in store.records() {
        *layers.entry(r.num_layers()).or_default() += 1;
        *dims.entry(r.dim()).or_default() += 1;
        *lengths.entry(r.seq_len()).or_default() += 1;
    }
    let tokens: usize = store.records().iter().map(|r| r.seq_len()).sum();
    let hist = |h: &BTreeMap<usize, usize>| h.iter().map(|(k, v)| format!("{k}:{v}")).collect::<Vec<_>>().join(" ");
    let text = format!(
        "records {}\ntokens {}\nlayers {}\ndims {}\nlengths {}\n",
        store.len(),
        tokens,
        hist(&layers),
        hist(&dims),
        hist(&lengths)
    );
    print!("{text}");
    if let Some(out) = &a.out {
        let mut manifest = Manifest::new("store-info", args);
        manifest.input("store", &a.store)?;
        create_out(out)?;
        let record = json!({
            "records": store.len(), "tokens": tokens,
            "layers": layers, "dims": dims, "lengths": lengths,
        });
        write_text(out, "store_info.json", &(serde_json::to_string_pretty(&record).unwrap() + "\n"))?;
        write_text(out, "store_info.txt", &text)?;
        manifest.write(out)?;
    }
    Ok(())
}
