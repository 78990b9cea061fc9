//! `midelight` command-line entry point.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use midelight::contrastive::CclPool;
use midelight::corpus::{AugmentStrategy, SplitKind};
use midelight::model::{FinalActivation, TaskLayout};
use midelight::synthetic::SyntheticSpec;
use midelight::trainer::StopMetric;
use serde::de::DeserializeOwned;

use crate::commands::{
    AblateArgs, EvaluateArgs, PreprocessArgs, SynthArgs, TrainArgs, CONFIG_FILE, TRAIN_CONFIG_FILE,
};
use crate::config::RunConfig;
use crate::error::CliError;

/// Semi-supervised text classification over word, POS and entity graphs
/// with instance- and cluster-level contrastive learning (MI-DELIGHT).
///
/// Exit codes: 0 success, 1 runtime failure, 2 usage or validation error
/// (stale run artifacts included).
#[derive(Debug, Parser)]
#[command(name = "midelight", version, about, long_about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a generated labeled corpus with matching vector and synonym files.
    Synth(SynthCmd),
    /// Load, augment and split a corpus, then build graphs and projections.
    Preprocess(PreprocessCmd),
    /// Train on a preprocessed run; writes model.ckpt, history.csv and report.json.
    Train(TrainCmd),
    /// Score a trained checkpoint on one split and write a metrics JSON.
    Evaluate(EvaluateCmd),
    /// Train the eight ablation variants in turn and write one comparison table.
    Ablate(AblateCmd),
}

#[derive(Debug, Args)]
struct SynthCmd {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Number of documents.
    #[arg(long, default_value_t = 300)]
    docs: usize,
    /// Number of classes.
    #[arg(long, default_value_t = 3)]
    classes: usize,
    /// Vocabulary words owned by each class.
    #[arg(long, default_value_t = 20)]
    words_per_class: usize,
    /// Entities owned by each class.
    #[arg(long, default_value_t = 4)]
    entities_per_class: usize,
    /// Generator seed.
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Debug, Args)]
struct PreprocessCmd {
    /// JSONL corpus: one {"id", "tokens", "pos", "entities", "label"} object per line.
    #[arg(long)]
    corpus: PathBuf,
    /// Word vectors, one "term v1 v2 ..." line per word.
    #[arg(long)]
    word_emb: PathBuf,
    /// Entity vectors, same layout as --word-emb.
    #[arg(long)]
    entity_emb: PathBuf,
    /// Run directory to write.
    #[arg(long)]
    out: PathBuf,
    /// TOML config; flags below override its values. [default: built-in defaults]
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed for augmentation, splitting and initialization. [default: config, 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Augmentation strategy: synonym, deletion or contextual_table. [default: config, deletion]
    #[arg(long, value_parser = parse_enum::<AugmentStrategy>)]
    augment: Option<AugmentStrategy>,
    /// Synonym table ({"word", "synonyms"} JSONL); required with --augment synonym.
    #[arg(long, conflicts_with = "context_table")]
    syn_table: Option<PathBuf>,
    /// Contextual substitutes ({"id", "position", "substitutes"} JSONL); required with
    /// --augment contextual_table.
    #[arg(long)]
    context_table: Option<PathBuf>,
    /// Fraction of tokens touched by augmentation, in (0, 1]. [default: config, 0.2]
    #[arg(long)]
    rate: Option<f64>,
    /// Co-occurrence window for the word and POS graphs. [default: config, 5]
    #[arg(long)]
    window: Option<usize>,
    /// Labeled documents per class; ceil(k/2) train, the rest validation. [default: config, 20]
    #[arg(long)]
    per_class_labeled: Option<usize>,
}

/// Overrides for the [train] section.
#[derive(Debug, Args, Default)]
struct TrainOverrides {
    /// Maximum epochs. [default: config, 500]
    #[arg(long)]
    epochs: Option<usize>,
    /// Adam learning rate. [default: config, 0.01]
    #[arg(long)]
    lr: Option<f64>,
    /// Contrastive temperature. [default: config, 0.5]
    #[arg(long)]
    tau: Option<f64>,
    /// Weight of the instance-level term. [default: config, 1.0]
    #[arg(long)]
    eta: Option<f64>,
    /// Weight of the cluster-level term. [default: config, 1.0]
    #[arg(long)]
    zeta: Option<f64>,
    /// Epochs without validation improvement before stopping. [default: config, 30]
    #[arg(long)]
    patience: Option<usize>,
    /// GCN and head width. [default: config, 64]
    #[arg(long)]
    hidden: Option<usize>,
    /// Task layout: hierarchical or parallel. [default: config, hierarchical]
    #[arg(long, value_parser = parse_enum::<TaskLayout>)]
    layout: Option<TaskLayout>,
    /// Activation of the last GCN layer: linear or relu. [default: config, linear]
    #[arg(long, value_parser = parse_enum::<FinalActivation>)]
    final_activation: Option<FinalActivation>,
    /// Average the cluster-level term over each anchor's positives. [default: config, off]
    #[arg(long)]
    ccl_mean_positives: bool,
    /// Cluster-level denominator pool: same_view or both_views. [default: config, same_view]
    #[arg(long, value_parser = parse_enum::<CclPool>)]
    ccl_pool: Option<CclPool>,
    /// Early-stopping metric: macro_f1 or accuracy. [default: config, macro_f1]
    #[arg(long, value_parser = parse_enum::<StopMetric>)]
    stop_metric: Option<StopMetric>,
}

impl TrainOverrides {
    fn apply(&self, c: &mut RunConfig) {
        let t = &mut c.train;
        if let Some(v) = self.epochs {
            t.epochs = v;
        }
        if let Some(v) = self.lr {
            t.lr = v;
        }
        if let Some(v) = self.tau {
            t.tau = v;
        }
        if let Some(v) = self.eta {
            t.eta = v;
        }
        if let Some(v) = self.zeta {
            t.zeta = v;
        }
        if let Some(v) = self.patience {
            t.patience = v;
        }
        if let Some(v) = self.hidden {
            t.hidden = v;
        }
        if let Some(v) = self.layout {
            t.layout = v;
        }
        if let Some(v) = self.final_activation {
            t.final_activation = v;
        }
        if self.ccl_mean_positives {
            t.ccl_mean_positives = true;
        }
        if let Some(v) = self.ccl_pool {
            t.ccl_pool = v;
        }
        if let Some(v) = self.stop_metric {
            t.stop_metric = v;
        }
    }
}

#[derive(Debug, Args)]
struct TrainCmd {
    /// Run directory written by `preprocess`.
    #[arg(long)]
    run: PathBuf,
    /// TOML config. [default: the run's config.toml]
    #[arg(long)]
    config: Option<PathBuf>,
    /// Independent repeats; repeat k re-splits and re-initializes with seed + k and
    /// writes into repeat-k/.
    #[arg(long, default_value_t = 1)]
    repeats: u64,
    /// Write each epoch's pseudo-cluster assignment to pseudo_labels/epoch-NNNN.tsv.
    #[arg(long)]
    dump_pseudo_labels: bool,
    #[command(flatten)]
    overrides: TrainOverrides,
}

#[derive(Debug, Args)]
struct EvaluateCmd {
    /// Trained run directory.
    #[arg(long)]
    run: PathBuf,
    /// Split to score: train, validation or test.
    #[arg(long, default_value = "test", value_parser = parse_split)]
    split: SplitKind,
    /// TOML config the checkpoint was trained with. [default: the run's train_config.toml]
    #[arg(long)]
    config: Option<PathBuf>,
    /// Repeat whose checkpoint to score.
    #[arg(long, default_value_t = 0)]
    repeat: u64,
    /// Metrics JSON path. [default: <run>/metrics-<split>.json]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AblateCmd {
    /// Run directory written by `preprocess`.
    #[arg(long)]
    run: PathBuf,
    /// TOML config for the full model; variants toggle it. [default: the run's config.toml]
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: TrainOverrides,
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_split(s: &str) -> Result<SplitKind, String> {
    s.parse().map_err(|e: midelight::Error| e.to_string())
}

fn load_or(path: Option<&Path>, fallback: &Path, missing: &str) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => RunConfig::load(p),
        None if fallback.is_file() => RunConfig::load(fallback),
        None => Err(CliError::Usage(missing.to_string())),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => commands::synth(&SynthArgs {
            out: a.out,
            spec: SyntheticSpec {
                docs: a.docs,
                classes: a.classes,
                words_per_class: a.words_per_class,
                entities_per_class: a.entities_per_class,
                seed: a.seed,
                ..SyntheticSpec::default()
            },
        }),
        Command::Preprocess(a) => {
            let mut config = match &a.config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            if let Some(s) = a.seed {
                config.seed = s;
                config.train.seed = s;
            }
            if let Some(s) = a.augment {
                config.augment.strategy = s;
            }
            if let Some(t) = a.syn_table.clone().or(a.context_table.clone()) {
                config.augment.table = Some(t);
            }
            if a.syn_table.is_some() && config.augment.strategy != AugmentStrategy::Synonym {
                return Err(CliError::Usage(
                    "--syn-table needs --augment synonym".into(),
                ));
            }
            if a.context_table.is_some()
                && config.augment.strategy != AugmentStrategy::ContextualTable
            {
                return Err(CliError::Usage(
                    "--context-table needs --augment contextual_table".into(),
                ));
            }
            if let Some(r) = a.rate {
                config.augment.rate = r;
            }
            if let Some(w) = a.window {
                config.graphs.window = w;
            }
            if let Some(k) = a.per_class_labeled {
                config.split.per_class_labeled = k;
            }
            commands::preprocess(&PreprocessArgs {
                corpus: a.corpus,
                word_emb: a.word_emb,
                entity_emb: a.entity_emb,
                out: a.out,
                config,
            })
            .map(|_| ())
        }
        Command::Train(a) => {
            let mut config = load_or(
                a.config.as_deref(),
                &a.run.join(CONFIG_FILE),
                "no --config given and the run has no config.toml; run `preprocess` first",
            )?;
            a.overrides.apply(&mut config);
            commands::train(&TrainArgs {
                run: a.run,
                config,
                repeats: a.repeats,
                dump_pseudo_labels: a.dump_pseudo_labels,
            })
        }
        Command::Evaluate(a) => {
            let config = load_or(
                a.config.as_deref(),
                &a.run.join(TRAIN_CONFIG_FILE),
                "no --config given and the run has no train_config.toml; run `train` first",
            )?;
            commands::evaluate_cmd(&EvaluateArgs {
                run: a.run,
                config,
                split: a.split,
                repeat: a.repeat,
                out: a.out,
            })
            .map(|_| ())
        }
        Command::Ablate(a) => {
            let mut config = load_or(
                a.config.as_deref(),
                &a.run.join(CONFIG_FILE),
                "no --config given and the run has no config.toml; run `preprocess` first",
            )?;
            a.overrides.apply(&mut config);
            commands::ablate(&AblateArgs { run: a.run, config }).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
