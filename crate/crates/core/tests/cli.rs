mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::s;
use serde_json::Value;

fn probekit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_probekit"))
        .args(args)
        .env("PROBE_THREADS", "1")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = probekit(args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn checkpoints(dir: &Path) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "ckpt"))
        .collect();
    out.sort();
    out
}

#[test]
fn help_and_version_exit_zero() {
    let out = probekit(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("train-ner"));
    let out = probekit(&["--version"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains(probekit::cli::VERSION));
}

#[test]
fn usage_errors_exit_one() {
    let out = probekit(&["store-info", "--store", "x.pte", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--bogus"));
    assert!(out.stdout.is_empty());
    assert_eq!(probekit(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(probekit(&[]).status.code(), Some(1));
}

#[test]
fn missing_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = s(&dir.path().join("absent.pte"));
    assert_eq!(probekit(&["store-info", "--store", &missing]).status.code(), Some(2));
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let f = common::ner_files(dir.path(), 5, 5);
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "learning_rate = 0.01\nwarmup = 3\n").unwrap();
    let out_dir = s(&dir.path().join("run"));
    let base = [
        "train-ner", "--train", &s(&f.train), "--dev", &s(&f.dev), "--store", &s(&f.store), "--dev-store",
        &s(&f.dev_store), "--out", &out_dir,
    ];
    let out = probekit(&[&base[..], &["--config", &s(&cfg)]].concat());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warmup"));
    assert_eq!(probekit(&[&base[..], &["--seeds", ""]].concat()).status.code(), Some(1));
    assert_eq!(probekit(&[&base[..], &["--learning-rate", "-1"]].concat()).status.code(), Some(1));

    let corrupt = dir.path().join("corrupt.pte");
    fs::write(&corrupt, b"NOPE\x01\x00\x00\x00").unwrap();
    assert_eq!(probekit(&["store-info", "--store", &s(&corrupt)]).status.code(), Some(1));
}

#[test]
fn config_file_then_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let f = common::ner_files(dir.path(), 20, 10);
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small run\nmax-epochs = 2\nseeds = 3,4\nhidden = 8\nlearning_rate = 0.01\n").unwrap();
    let out_dir = dir.path().join("run");
    ok(&[
        "train-ner", "--train", &s(&f.train), "--dev", &s(&f.dev), "--store", &s(&f.store), "--dev-store",
        &s(&f.dev_store), "--out", &s(&out_dir), "--config", &s(&cfg), "--seeds", "5", "--activation", "tanh",
    ]);
    let m = manifest(&out_dir);
    assert_eq!(m["command"], "train-ner");
    assert_eq!(m["seeds"], serde_json::json!([5]));
    assert_eq!(m["config"]["max_epochs"], "2");
    assert_eq!(m["config"]["learning_rate"], "0.01");
    assert_eq!(m["config"]["hidden"], "8");
    assert_eq!(m["config"]["activation"], "tanh");
    assert!(m["version"].as_str().unwrap().starts_with('v'));
    assert!(m["created_unix"].as_u64().unwrap() > 0);
    let config_digest = m["inputs"]["config"]["sha256"].as_str().unwrap();
    assert_eq!(config_digest.len(), 64);
    for role in ["train", "dev", "store", "dev_store"] {
        assert!(m["inputs"][role]["sha256"].is_string(), "{role}");
    }
    assert_eq!(checkpoints(&out_dir).len(), 1);
    let trace = fs::read_to_string(out_dir.join("trace.jsonl")).unwrap();
    assert!(trace.lines().count() <= 2);
}

#[test]
fn ner_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let f = common::ner_files(dir.path(), 40, 15);
    let run = dir.path().join("train");
    ok(&[
        "train-ner", "--train", &s(&f.train), "--dev", &s(&f.dev), "--store", &s(&f.store), "--dev-store",
        &s(&f.dev_store), "--test", &s(&f.dev), "--test-store", &s(&f.dev_store), "--out", &s(&run), "--hidden",
        "16", "--max-epochs", "3", "--seeds", "1,2",
    ]);
    let metrics: Vec<Value> = fs::read_to_string(run.join("metrics.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(metrics.iter().any(|r| r["split"] == "test"));
    assert!(fs::read_to_string(run.join("metrics.txt")).unwrap().contains("mean"));
    let ckpts = checkpoints(&run);
    assert_eq!(ckpts.len(), 2);

    let eval = dir.path().join("eval");
    let mut args = vec!["eval-ner".to_string(), "--checkpoint".into()];
    args.extend(ckpts.iter().map(|p| s(p)));
    args.extend(["--data", &s(&f.dev), "--store", &s(&f.dev_store), "--out", &s(&eval)].map(String::from));
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let predictions = fs::read_to_string(eval.join("predictions.jsonl")).unwrap();
    assert!(predictions.lines().count() >= 15);
    let m = manifest(&eval);
    assert_eq!(m["command"], "eval-ner");
    assert!(m["inputs"]["checkpoint[1]"]["sha256"].is_string());

    let first_token = fs::read_to_string(&f.dev).unwrap().lines().next().unwrap().split('\t').next().unwrap().to_string();
    let vectors = dir.path().join("vectors");
    ok(&[
        "export-vectors", "--data", &s(&f.dev), "--store", &s(&f.dev_store), "--token", &first_token, "--checkpoint",
        &s(&ckpts[0]), "--tag", "layer-mix", "--out", &s(&vectors),
    ]);
    let tsv = fs::read_to_string(vectors.join("vectors.tsv")).unwrap();
    let mut lines = tsv.lines();
    assert!(lines.next().unwrap().starts_with("id\tlabel\tin_parens\ttag\tv0"));
    assert!(lines.next().unwrap().contains("layer-mix"));

    let info = ok(&["store-info", "--store", &s(&f.store)]);
    assert!(info.contains("40"), "{info}");
    let info_dir = dir.path().join("info");
    ok(&["store-info", "--store", &s(&f.store), "--out", &s(&info_dir)]);
    assert!(info_dir.join("store_info.json").exists());
    assert_eq!(manifest(&info_dir)["command"], "store-info");
}

#[test]
fn nli_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let f = common::nli_files(dir.path(), 60, 30);
    let run = dir.path().join("train");
    ok(&[
        "train-nli", "--train", &s(&f.train), "--dev", &s(&f.dev), "--store", &s(&f.store), "--dev-store",
        &s(&f.dev_store), "--out", &s(&run), "--rank", "8", "--max-epochs", "3", "--seeds", "1,2",
        "--tie-mix", "false",
    ]);
    assert_eq!(manifest(&run)["config"]["tie_mix"], "false");
    let ckpts = checkpoints(&run);
    assert_eq!(ckpts.len(), 2);
    let (c0, c1) = (s(&ckpts[0]), s(&ckpts[1]));

    let eval = dir.path().join("eval");
    ok(&[
        "eval-nli", "--checkpoint", &c0, &c1, "--data", &s(&f.dev), "--store", &s(&f.dev_store), "--annotations",
        &s(&f.annotations), "--out", &s(&eval),
    ]);
    assert!(fs::read_to_string(eval.join("predictions.jsonl")).unwrap().lines().count() >= 30);
    assert!(eval.join("metrics.txt").exists());

    let rel = dir.path().join("relations");
    ok(&[
        "export-relations", "--checkpoint", &c0, &c1, "--data", &s(&f.dev), "--store", &s(&f.dev_store),
        "--annotations", &s(&f.annotations), "--out", &s(&rel),
    ]);
    let mut reps = Vec::new();
    let mut types = Vec::new();
    for seed in [1, 2] {
        reps.push(s(&rel.join(format!("relations_seed{seed}.pte"))));
        types.push(s(&rel.join(format!("relations_seed{seed}.jsonl"))));
    }

    let report = ok(&[
        "analyze-nn", "--reps", &reps[0], &reps[1], "--types", &types[0], &types[1], "--k", "3", "--metric",
        "euclidean",
    ]);
    assert!(report.contains("all"), "{report}");

    let nn = dir.path().join("nn");
    ok(&[
        "analyze-nn", "--reps", &reps[0], &reps[1], "--types", &types[0], &types[1], "--baseline-reps", &reps[1],
        &reps[0], "--baseline-types", &types[1], &types[0], "--out", &s(&nn),
    ]);
    let record: Value = serde_json::from_str(&fs::read_to_string(nn.join("nn_report.json")).unwrap()).unwrap();
    assert!(record.is_object());
    assert_eq!(manifest(&nn)["command"], "analyze-nn");

    let vectors = dir.path().join("vectors");
    ok(&["export-vectors", "--reps", &reps[0], "--types", &types[0], "--out", &s(&vectors)]);
    let tsv = fs::read_to_string(vectors.join("vectors.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 1 + 10);
}

#[test]
fn repeated_eval_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let f = common::nli_files(dir.path(), 30, 12);
    let run = dir.path().join("train");
    ok(&[
        "train-nli", "--train", &s(&f.train), "--dev", &s(&f.dev), "--store", &s(&f.store), "--dev-store",
        &s(&f.dev_store), "--out", &s(&run), "--rank", "4", "--max-epochs", "2", "--seeds", "9",
    ]);
    let ckpt = s(&checkpoints(&run)[0]);
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        ok(&["eval-nli", "--checkpoint", &ckpt, "--data", &s(&f.dev), "--store", &s(&f.dev_store), "--out", &s(&out)]);
        outputs.push((
            fs::read(out.join("predictions.jsonl")).unwrap(),
            fs::read(out.join("metrics.jsonl")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}
