use std::path::{Path, PathBuf};

use labeler_core::corpus::{generate, read_dataset, write_dataset, GeneratorConfig, LabeledDataset, TemplateBank};
use report_labeler::{run, TrainSummary};
use serde_json::Value;
use tempfile::TempDir;

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str]) -> Output {
    let mut stdout = Vec::new();
    let mut stderr = Vec::new();
    let mut full = vec!["report-labeler"];
    full.extend_from_slice(args);
    let code = run(full, &mut stdout, &mut stderr);
    Output {
        code,
        stdout: String::from_utf8(stdout).unwrap(),
        stderr: String::from_utf8(stderr).unwrap(),
    }
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn corpus(dir: &TempDir, name: &str, n: usize, seed: u64, mismatch: f64) -> PathBuf {
    let config = GeneratorConfig {
        seed,
        mismatch_rate: mismatch,
        id_prefix: name.into(),
        ..GeneratorConfig::default()
    };
    let data = generate(&config, &TemplateBank::default_german(), n).unwrap();
    let path = dir.path().join(format!("{name}.jsonl"));
    write_dataset(&data, &path).unwrap();
    path
}

const SMALL_TRAIN: &str = r#"{
  "encoder": {"dim": 1024},
  "train": {"learning_rate": 0.01, "hidden": 8, "epochs": 1, "eval_interval": 20, "seed": 1}
}"#;

fn train_config(dir: &TempDir) -> PathBuf {
    let path = dir.path().join("train.json");
    std::fs::write(&path, SMALL_TRAIN).unwrap();
    path
}

#[test]
fn version_names_all_formats() {
    let out = cli(&["--version"]);
    assert_eq!(out.code, 0);
    for needle in ["label schema v1", "checkpoint format v1", "metric report v1"] {
        assert!(out.stdout.contains(needle), "{}", out.stdout);
    }
    assert_eq!(cli(&["--help"]).code, 0);
}

#[test]
fn unknown_flags_are_usage_errors() {
    assert_eq!(cli(&["generate", "--bogus"]).code, 1);
    assert_eq!(cli(&[]).code, 1);
}

#[test]
fn generate_is_reproducible_and_counts_lines() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for out in [&a, &b] {
        let o = cli(&["generate", "--count", "40", "--seed", "9", "--out", path_str(out)]);
        assert_eq!(o.code, 0, "{}", o.stderr);
        let summary: Value = serde_json::from_str(&o.stdout).unwrap();
        assert_eq!(summary["reports"], 40);
        assert_eq!(summary["version"], 1);
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    assert_eq!(String::from_utf8(bytes).unwrap().lines().count(), 40);
}

#[test]
fn generate_rejects_zero_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.jsonl");
    assert_eq!(cli(&["generate", "--count", "0", "--out", path_str(&out)]).code, 1);
    assert!(!out.exists());
}

#[test]
fn generate_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("gen.json");
    std::fs::write(&config, r#"{"mismatch_rate": 3.0}"#).unwrap();
    let out = dir.path().join("x.jsonl");
    let o = cli(&["generate", "--config", path_str(&config), "--count", "5", "--out", path_str(&out)]);
    assert_eq!(o.code, 2, "{}", o.stderr);
}

#[test]
fn rule_labels_reproduce_truth_without_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let input = corpus(&dir, "truth", 400, 21, 0.0);
    let before = std::fs::read(&input).unwrap();
    let out = dir.path().join("rules.jsonl");
    let o = cli(&["label-rules", "--in", path_str(&input), "--out", path_str(&out)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert_eq!(std::fs::read(&input).unwrap(), before, "input must not change");
    let truth = read_dataset(&input).unwrap();
    let labeled = read_dataset(&out).unwrap();
    assert_eq!(labeled.labels().unwrap(), truth.labels().unwrap());
    assert!(labeled.reports().iter().all(|r| r.source == labeler_core::Source::Rule));
}

#[test]
fn label_rules_handles_empty_and_missing_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let out = dir.path().join("out.jsonl");
    assert_eq!(cli(&["label-rules", "--in", path_str(&empty), "--out", path_str(&out)]).code, 0);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "");
    let missing = dir.path().join("missing.jsonl");
    assert_eq!(cli(&["label-rules", "--in", path_str(&missing), "--out", path_str(&out)]).code, 2);
}

#[test]
fn malformed_lexicon_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = corpus(&dir, "lex", 5, 1, 0.0);
    let lexicon = dir.path().join("lexicon.json");
    std::fs::write(&lexicon, r#"{"phrases": {"Edema": ["*"]}}"#).unwrap();
    let out = dir.path().join("out.jsonl");
    let o = cli(&[
        "label-rules",
        "--lexicon",
        path_str(&lexicon),
        "--in",
        path_str(&input),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.code, 2, "{}", o.stderr);
}

#[test]
fn train_checks_regime_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let manual = corpus(&dir, "man", 30, 2, 0.0);
    let out = dir.path().join("m.ckpt");
    let hybrid = cli(&["train", "--regime", "hybrid", "--manual", path_str(&manual), "--out", path_str(&out)]);
    assert_eq!(hybrid.code, 1);
    assert!(hybrid.stderr.contains("--weak"), "{}", hybrid.stderr);
    let weak_fraction = cli(&[
        "train", "--regime", "weak", "--weak", path_str(&manual), "--fraction", "50", "--out", path_str(&out),
    ]);
    assert_eq!(weak_fraction.code, 1);
    let bad_fraction = cli(&[
        "train", "--regime", "supervised", "--manual", path_str(&manual), "--fraction", "30", "--out", path_str(&out),
    ]);
    assert_eq!(bad_fraction.code, 1);
}

#[test]
fn supervised_training_uses_quarter_splits_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let manual = corpus(&dir, "man", 1013, 3, 0.0);
    let config = train_config(&dir);
    let mut checkpoints = Vec::new();
    for name in ["a.ckpt", "b.ckpt"] {
        let out = dir.path().join(name);
        let o = cli(&[
            "train",
            "--regime",
            "supervised",
            "--fraction",
            "100",
            "--manual",
            path_str(&manual),
            "--config",
            path_str(&config),
            "--out",
            path_str(&out),
        ]);
        assert_eq!(o.code, 0, "{}", o.stderr);
        let summary: TrainSummary = serde_json::from_str(&o.stdout).unwrap();
        assert_eq!((summary.train_reports, summary.validation_reports), (810, 203));
        assert!((0.0..=1.0).contains(&summary.metric));
        checkpoints.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(checkpoints[0], checkpoints[1]);
}

fn labeled_pair(dir: &TempDir) -> (PathBuf, LabeledDataset) {
    let path = corpus(dir, "ref", 150, 8, 0.1);
    let data = read_dataset(&path).unwrap();
    (path, data)
}

#[test]
fn evaluate_identical_sets_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let (reference, _) = labeled_pair(&dir);
    let o = cli(&["evaluate", "--pred", path_str(&reference), "--ref", path_str(&reference)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let report: Value = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(report["version"], 1);
    for finding in report["findings"].as_array().unwrap() {
        for task in ["mention", "negation", "uncertainty"] {
            let cell = &finding[task];
            assert!(cell == 1.0 || cell == "NA" || cell == "-", "{finding}");
        }
    }
    let no_finding = report["findings"]
        .as_array()
        .unwrap()
        .iter()
        .find(|f| f["finding"] == "NoFinding")
        .unwrap();
    assert_eq!(no_finding["negation"], "-");
    assert_eq!(no_finding["uncertainty"], "-");
    assert!(o.stderr.contains("NoFinding"));
}

#[test]
fn evaluate_bootstrap_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (reference, data) = labeled_pair(&dir);
    let rules = report_labeler_rules(&dir, &reference);
    let args = |seed: &'static str| {
        cli(&[
            "evaluate",
            "--pred",
            path_str(&rules),
            "--ref",
            path_str(&reference),
            "--bootstrap",
            "300",
            "--seed",
            seed,
        ])
    };
    let a = args("4");
    assert_eq!(a.code, 0, "{}", a.stderr);
    assert_eq!(a.stdout, args("4").stdout);
    assert_ne!(a.stdout, args("5").stdout);
    assert_eq!(data.len(), 150);
}

fn report_labeler_rules(dir: &TempDir, input: &Path) -> PathBuf {
    let out = dir.path().join("rules.jsonl");
    assert_eq!(cli(&["label-rules", "--in", path_str(input), "--out", path_str(&out)]).code, 0);
    out
}

#[test]
fn evaluate_rejects_mismatched_ids() {
    let dir = tempfile::tempdir().unwrap();
    let (reference, _) = labeled_pair(&dir);
    let other = corpus(&dir, "other", 150, 9, 0.0);
    let o = cli(&["evaluate", "--pred", path_str(&other), "--ref", path_str(&reference)]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("ids"), "{}", o.stderr);
}

#[test]
fn model_scores_enable_auc() {
    let dir = tempfile::tempdir().unwrap();
    let manual = corpus(&dir, "man", 120, 5, 0.0);
    let config = train_config(&dir);
    let ckpt = dir.path().join("m.ckpt");
    let trained = cli(&[
        "train", "--regime", "supervised", "--manual", path_str(&manual), "--config", path_str(&config), "--out",
        path_str(&ckpt),
    ]);
    assert_eq!(trained.code, 0, "{}", trained.stderr);
    let pred = dir.path().join("pred.jsonl");
    let scores = dir.path().join("scores.jsonl");
    let labeled = cli(&[
        "label-model", "--checkpoint", path_str(&ckpt), "--in", path_str(&manual), "--out", path_str(&pred),
        "--scores", path_str(&scores),
    ]);
    assert_eq!(labeled.code, 0, "{}", labeled.stderr);
    let o = cli(&[
        "evaluate", "--pred", path_str(&pred), "--ref", path_str(&manual), "--scores", path_str(&scores), "--roc",
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let report: Value = serde_json::from_str(&o.stdout).unwrap();
    let edema = &report["findings"][3];
    assert_eq!(edema["finding"], "Edema");
    assert!(edema["auc"]["value"].is_number(), "{edema}");
    assert!(edema["roc"].is_array());
}

#[test]
fn comparing_a_labeler_with_itself_flags_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let (reference, _) = labeled_pair(&dir);
    let o = cli(&["compare", "--labelers", "rule,rule", "--ref", path_str(&reference)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let comparison: Value = serde_json::from_str(&o.stdout).unwrap();
    for row in comparison["rows"].as_array().unwrap() {
        assert_eq!(row["values"][0], row["values"][1]);
        assert!(row["higher"].is_null());
    }
    assert!(!o.stderr.contains('*'));
}

#[test]
fn compare_table_agrees_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let (reference, _) = labeled_pair(&dir);
    let config = train_config(&dir);
    let ckpt = dir.path().join("m.ckpt");
    let trained = cli(&[
        "train", "--regime", "supervised", "--manual", path_str(&reference), "--config", path_str(&config), "--out",
        path_str(&ckpt),
    ]);
    assert_eq!(trained.code, 0, "{}", trained.stderr);
    let o = cli(&["compare", "--labelers", "rule,model", "--checkpoint", path_str(&ckpt), "--ref", path_str(&reference)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let comparison: Value = serde_json::from_str(&o.stdout).unwrap();
    let flagged = comparison["rows"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| !r["higher"].is_null())
        .count();
    assert_eq!(o.stderr.matches('*').count(), flagged);
    for row in comparison["rows"].as_array().unwrap() {
        if let (Some(a), Some(b)) = (row["values"][0].as_f64(), row["values"][1].as_f64()) {
            let expected = if a > b {
                Value::from("rule")
            } else if b > a {
                Value::from("model")
            } else {
                Value::Null
            };
            assert_eq!(row["higher"], expected, "{row}");
        }
    }
}

#[test]
fn compare_requires_a_checkpoint_for_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let (reference, _) = labeled_pair(&dir);
    assert_eq!(cli(&["compare", "--labelers", "rule,model", "--ref", path_str(&reference)]).code, 1);
    let missing = dir.path().join("none.ckpt");
    let o = cli(&[
        "compare", "--labelers", "rule,model", "--checkpoint", path_str(&missing), "--ref", path_str(&reference),
    ]);
    assert_eq!(o.code, 1);
    assert_eq!(cli(&["compare", "--labelers", "rule,rule,rule", "--ref", path_str(&reference)]).code, 1);
}

#[test]
fn corrupt_checkpoint_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let (reference, _) = labeled_pair(&dir);
    let ckpt = dir.path().join("bad.ckpt");
    std::fs::write(&ckpt, b"RLCK garbage").unwrap();
    let out = dir.path().join("pred.jsonl");
    let o = cli(&["label-model", "--checkpoint", path_str(&ckpt), "--in", path_str(&reference), "--out", path_str(&out)]);
    assert_eq!(o.code, 2, "{}", o.stderr);
}
