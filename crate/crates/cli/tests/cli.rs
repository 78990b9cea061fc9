use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_midelight");

fn midelight(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        ok(&ws.run(&[
            "synth",
            "--out",
            "data",
            "--docs",
            "45",
            "--words-per-class",
            "8",
        ]));
        std::fs::write(
            ws.path().join("midelight.toml"),
            "seed = 1\n\
             [train]\nepochs = 15\nhidden = 8\npatience = 30\n\
             [augment]\nstrategy = \"synonym\"\ntable = \"data/synonyms.jsonl\"\n\
             [split]\nper_class_labeled = 4\n",
        )
        .unwrap();
        ws
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn run(&self, args: &[&str]) -> Output {
        midelight(args, self.path())
    }

    fn preprocess(&self, out: &str, extra: &[&str]) -> Output {
        let mut args = vec![
            "preprocess",
            "--corpus",
            "data/corpus.jsonl",
            "--word-emb",
            "data/words.txt",
            "--entity-emb",
            "data/entities.txt",
            "--out",
            out,
        ];
        args.extend_from_slice(extra);
        self.run(&args)
    }

    fn prepared(&self, out: &str) -> PathBuf {
        ok(&self.preprocess(out, &["--config", "midelight.toml"]));
        self.path().join(out)
    }

    fn read(&self, rel: impl AsRef<Path>) -> String {
        std::fs::read_to_string(self.path().join(rel)).unwrap()
    }

    fn json(&self, rel: impl AsRef<Path>) -> Value {
        serde_json::from_str(&self.read(rel)).unwrap()
    }
}

#[test]
fn preprocess_writes_eight_artifacts_and_a_manifest() {
    let ws = Workspace::new();
    let out = ws.preprocess(
        "runs/toy",
        &[
            "--augment",
            "synonym",
            "--syn-table",
            "data/synonyms.jsonl",
            "--per-class-labeled",
            "4",
        ],
    );
    ok(&out);
    let m = ws.json("runs/toy/manifest.json");
    let artifacts = m["artifacts"].as_array().unwrap();
    assert_eq!(artifacts.len(), 8);
    for a in artifacts {
        let p = ws.path().join("runs/toy").join(a["path"].as_str().unwrap());
        assert!(p.is_file(), "{} missing", p.display());
        assert_eq!(a["sha256"].as_str().unwrap().len(), 64);
    }
    assert_eq!(m["inputs"].as_array().unwrap().len(), 4);
    assert_eq!(m["seed"], 0);
    assert_eq!(m["config"]["augment"]["strategy"], "synonym");
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn synonym_augmentation_without_a_table_is_a_usage_error() {
    let ws = Workspace::new();
    let out = ws.preprocess("runs/x", &["--augment", "synonym"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--syn-table"), "{}", stderr(&out));
    assert!(!ws.path().join("runs/x/manifest.json").exists());

    let out = ws.preprocess("runs/x", &["--augment", "contextual_table"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--context-table"));
}

#[test]
fn bad_flags_and_missing_inputs_exit_two() {
    let ws = Workspace::new();
    assert_eq!(
        ws.preprocess("r", &["--augment", "shuffle"]).status.code(),
        Some(2)
    );
    assert_eq!(
        ws.preprocess("r", &["--rate", "1.5"]).status.code(),
        Some(2)
    );
    let out = ws.run(&[
        "preprocess",
        "--corpus",
        "nope.jsonl",
        "--word-emb",
        "data/words.txt",
        "--entity-emb",
        "data/entities.txt",
        "--out",
        "r",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--corpus"));
    assert_eq!(
        ws.run(&["train", "--run", "no-such-run"]).status.code(),
        Some(2)
    );
}

#[test]
fn malformed_corpus_is_a_runtime_failure_with_line_context() {
    let ws = Workspace::new();
    std::fs::write(
        ws.path().join("bad.jsonl"),
        "{\"id\": 1, \"tokens\": [\"a\"]\n",
    )
    .unwrap();
    let out = ws.run(&[
        "preprocess",
        "--corpus",
        "bad.jsonl",
        "--word-emb",
        "data/words.txt",
        "--entity-emb",
        "data/entities.txt",
        "--out",
        "r",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("bad.jsonl:1"), "{}", stderr(&out));
}

#[test]
fn preprocess_rerun_reproduces_every_digest() {
    let ws = Workspace::new();
    ws.prepared("a");
    let first = ws.read("a/manifest.json");
    ws.prepared("a");
    assert_eq!(ws.read("a/manifest.json"), first);
    ws.prepared("b");
    let (ma, mb) = (ws.json("a/manifest.json"), ws.json("b/manifest.json"));
    assert_eq!(ma["artifacts"], mb["artifacts"]);
}

#[test]
fn train_then_evaluate() {
    let ws = Workspace::new();
    ws.prepared("runs/toy");
    ok(&ws.run(&["train", "--run", "runs/toy", "--config", "midelight.toml"]));

    let history = ws.read("runs/toy/history.csv");
    let mut lines = history.lines();
    assert_eq!(
        lines.next(),
        Some("epoch,ce,icl,ccl,total,val_acc,val_macro_f1")
    );
    let report = ws.json("runs/toy/report.json");
    let epochs = report["epochs_run"].as_u64().unwrap() as usize;
    assert_eq!(lines.count(), epochs);
    assert!(epochs <= 15);
    assert!(ws.path().join("runs/toy/model.ckpt").is_file());
    let manifest = ws.json("runs/toy/manifest.json");
    assert!(manifest["outputs"]["train.checkpoint"]["sha256"].is_string());
    assert!(manifest["outputs"]["train.history"]["sha256"].is_string());

    let stdout = ok(&ws.run(&["evaluate", "--run", "runs/toy", "--split", "test"]));
    let printed: Value = serde_json::from_str(&stdout).unwrap();
    let written = ws.json("runs/toy/metrics-test.json");
    assert_eq!(printed, written);
    for key in ["accuracy", "macro_f1"] {
        let v = written[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }
    assert_eq!(written["per_class_f1"].as_array().unwrap().len(), 3);
    assert!(ws.json("runs/toy/manifest.json")["outputs"]["evaluate.test"].is_object());
}

#[test]
fn training_is_reproducible() {
    let ws = Workspace::new();
    for run in ["a", "b"] {
        ws.prepared(run);
        ok(&ws.run(&["train", "--run", run, "--config", "midelight.toml"]));
    }
    assert_eq!(ws.read("a/history.csv"), ws.read("b/history.csv"));
    assert_eq!(
        std::fs::read(ws.path().join("a/model.ckpt")).unwrap(),
        std::fs::read(ws.path().join("b/model.ckpt")).unwrap()
    );
}

#[test]
fn stale_artifacts_and_configs_are_fatal() {
    let ws = Workspace::new();
    let run = ws.prepared("r");
    ok(&ws.run(&["train", "--run", "r"]));

    let mut other = ws.read("r/train_config.toml");
    other = other.replace("epochs = 15", "epochs = 16");
    std::fs::write(ws.path().join("other.toml"), &other).unwrap();
    let out = ws.run(&["evaluate", "--run", "r", "--config", "other.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("stale"), "{}", stderr(&out));

    let window = ws.read("midelight.toml") + "[graphs]\nwindow = 3\n";
    std::fs::write(ws.path().join("window.toml"), window).unwrap();
    let out = ws.run(&["train", "--run", "r", "--config", "window.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("stale"));

    let graph = run.join("graphs/pos.tsv");
    let mut text = std::fs::read_to_string(&graph).unwrap();
    text.push('\n');
    std::fs::write(&graph, text).unwrap();
    let out = ws.run(&["evaluate", "--run", "r"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("pos.tsv"), "{}", stderr(&out));
}

#[test]
fn repeats_and_pseudo_label_dumps() {
    let ws = Workspace::new();
    ws.prepared("r");
    let stdout = ok(&ws.run(&[
        "train",
        "--run",
        "r",
        "--repeats",
        "2",
        "--epochs",
        "4",
        "--dump-pseudo-labels",
    ]));
    let summary: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(summary["repeats"].as_array().unwrap().len(), 2);
    assert!(summary["mean_test_accuracy"].is_f64());
    assert!(ws.path().join("r/repeat-1/model.ckpt").is_file());
    assert_ne!(ws.read("r/history.csv"), ws.read("r/repeat-1/history.csv"));
    let dump = ws.read("r/pseudo_labels/epoch-0001.tsv");
    assert!(dump.starts_with("doc_id\tview\tcomponent_id\n"));
    assert_eq!(dump.lines().count(), 1 + 2 * 45);

    let one: Value =
        serde_json::from_str(&ok(&ws.run(&["evaluate", "--run", "r", "--repeat", "1"]))).unwrap();
    assert_eq!(one["accuracy"], summary["repeats"][1]["test"]["accuracy"]);
}

#[test]
fn ablate_emits_the_eight_variants() {
    let ws = Workspace::new();
    ws.prepared("r");
    let stdout = ok(&ws.run(&["ablate", "--run", "r", "--epochs", "3"]));
    let rows: Vec<&str> = stdout.lines().skip(2).collect();
    let names: Vec<&str> = rows
        .iter()
        .map(|l| l.trim_matches('|').split('|').next().unwrap().trim())
        .collect();
    assert_eq!(
        names,
        [
            "w/o word graph",
            "w/o POS graph",
            "w/o entity graph",
            "w/o CCL and ICL",
            "w/o CCL",
            "w/o ICL",
            "parallel",
            "MI-DELIGHT",
        ]
    );
    let json = ws.json("r/ablation.json");
    assert_eq!(json.as_array().unwrap().len(), 8);
    assert_eq!(ws.read("r/ablation.md"), stdout);
}

#[test]
fn help_documents_flags_and_defaults() {
    let ws = Workspace::new();
    let top = ok(&ws.run(&["--help"]));
    for cmd in [
        "synth",
        "preprocess",
        "train",
        "evaluate",
        "ablate",
        "Exit codes",
    ] {
        assert!(top.contains(cmd), "{cmd} missing from --help");
    }
    let pre = ok(&ws.run(&["preprocess", "--help"]));
    for flag in [
        "--corpus",
        "--word-emb",
        "--entity-emb",
        "--out",
        "--config",
        "--seed",
        "--augment",
        "--syn-table",
        "--context-table",
        "--rate",
        "--window",
        "--per-class-labeled",
        "deletion]",
        "0.2]",
    ] {
        assert!(pre.contains(flag), "{flag} missing from preprocess --help");
    }
    let train = ok(&ws.run(&["train", "--help"]));
    for flag in [
        "--repeats",
        "[default: 1]",
        "--dump-pseudo-labels",
        "--epochs",
        "--lr",
        "--tau",
        "--eta",
        "--zeta",
        "--patience",
        "--hidden",
        "--layout",
        "--final-activation",
        "--ccl-mean-positives",
        "--ccl-pool",
        "--stop-metric",
        "500]",
    ] {
        assert!(train.contains(flag), "{flag} missing from train --help");
    }
    let eval = ok(&ws.run(&["evaluate", "--help"]));
    assert!(eval.contains("[default: test]"));
}
