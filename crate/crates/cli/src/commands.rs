use std::path::{Path, PathBuf};

use midelight::contrastive::write_assignment_tsv;
use midelight::corpus::{split_corpus, AugmentStrategy, CorpusBundle, SplitKind};
use midelight::graph::{GraphKind, InfoGraph, InfoGraphs, ProjectionMatrix, Projections};
use midelight::model::{config_hash, load_checkpoint, save_checkpoint, ModelParams, TaskLayout};
use midelight::numerics::{CsrMatrix, Matrix};
use midelight::pipeline::{prepare, PrepareOptions};
use midelight::synthetic::{write_synthetic_corpus, SyntheticSpec};
use midelight::trainer::{
    evaluate, train_with_observer, write_history_csv, EpochRecord, EpochView, Metrics, Problem,
    TrainConfig,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::{digest, RunManifest};

pub const BUNDLE_FILE: &str = "bundle.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const TRAIN_CONFIG_FILE: &str = "train_config.toml";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.csv";
pub const REPORT_FILE: &str = "report.json";

const KINDS: [GraphKind; 3] = [GraphKind::Word, GraphKind::Pos, GraphKind::Entity];

fn graph_path(kind: GraphKind) -> PathBuf {
    PathBuf::from("graphs").join(format!("{}.tsv", kind.as_str()))
}

fn projection_path(kind: GraphKind) -> PathBuf {
    PathBuf::from("projections").join(format!("{}.tsv", kind.as_str()))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path.display(), e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_file(path, text.as_bytes())?;
    Ok(text)
}

pub struct SynthArgs {
    pub out: PathBuf,
    pub spec: SyntheticSpec,
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let files = write_synthetic_corpus(&args.out, &args.spec)?;
    for p in [
        &files.corpus,
        &files.word_embeddings,
        &files.entity_embeddings,
        &files.synonyms,
    ] {
        println!("{}", p.display());
    }
    Ok(())
}

pub struct PreprocessArgs {
    pub corpus: PathBuf,
    pub word_emb: PathBuf,
    pub entity_emb: PathBuf,
    pub out: PathBuf,
    pub config: RunConfig,
}

/// Checks that the augmentation table matches the strategy. `flag` names the
/// option the user should have passed.
pub fn check_augment_table(config: &RunConfig) -> Result<(), CliError> {
    let flag = match config.augment.strategy {
        AugmentStrategy::Synonym => "--syn-table",
        AugmentStrategy::ContextualTable => "--context-table",
        AugmentStrategy::Deletion => {
            if config.augment.table.is_some() {
                return Err(CliError::Usage(
                    "--augment deletion takes no substitution table".into(),
                ));
            }
            return Ok(());
        }
    };
    match &config.augment.table {
        None => Err(CliError::Usage(format!(
            "{flag} is required with --augment {}",
            strategy_name(config.augment.strategy)
        ))),
        Some(p) if !p.is_file() => Err(CliError::Usage(format!(
            "{flag}: {} does not exist",
            p.display()
        ))),
        Some(_) => Ok(()),
    }
}

fn strategy_name(s: AugmentStrategy) -> String {
    serde_json::to_value(s)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn preprocess(args: &PreprocessArgs) -> Result<RunManifest, CliError> {
    let config = &args.config;
    config.validate()?;
    check_augment_table(config)?;
    for (flag, p) in [
        ("--corpus", &args.corpus),
        ("--word-emb", &args.word_emb),
        ("--entity-emb", &args.entity_emb),
    ] {
        if !p.is_file() {
            return Err(CliError::Usage(format!(
                "{flag}: {} does not exist",
                p.display()
            )));
        }
    }
    let mut inputs = vec![
        digest("corpus", &args.corpus, None)?,
        digest("word_embeddings", &args.word_emb, None)?,
        digest("entity_embeddings", &args.entity_emb, None)?,
    ];
    if let Some(t) = &config.augment.table {
        inputs.push(digest("augment_table", t, None)?);
    }

    let options = PrepareOptions {
        strategy: config.augment.strategy,
        table: config.augment.table.clone(),
        rate: config.augment.rate,
        augment_seed: config.seed,
        per_class_labeled: config.split.per_class_labeled,
        split_seed: config.seed,
        window: config.graphs.window,
    };
    let prepared = prepare(&args.corpus, &args.word_emb, &args.entity_emb, &options)?;
    for r in &prepared.rejected {
        eprintln!(
            "skipped document {} (line {}): {}",
            r.doc_id, r.line, r.reason
        );
    }

    let out = &args.out;
    create_dir(&out.join("graphs"))?;
    create_dir(&out.join("projections"))?;
    prepared.bundle.save(&out.join(BUNDLE_FILE))?;
    write_file(&out.join(CONFIG_FILE), config.to_toml().as_bytes())?;
    for kind in KINDS {
        prepared
            .graphs
            .get(kind)
            .adjacency
            .save_triplets(&out.join(graph_path(kind)))?;
        prepared
            .projections
            .get(kind)
            .values
            .save_triplets(&out.join(projection_path(kind)))?;
    }

    let mut artifacts = vec![
        digest("bundle", Path::new(BUNDLE_FILE), Some(out))?,
        digest("config", Path::new(CONFIG_FILE), Some(out))?,
    ];
    for kind in KINDS {
        artifacts.push(digest(
            &format!("graph.{}", kind.as_str()),
            &graph_path(kind),
            Some(out),
        )?);
    }
    for kind in KINDS {
        artifacts.push(digest(
            &format!("projection.{}", kind.as_str()),
            &projection_path(kind),
            Some(out),
        )?);
    }
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        config: config.clone(),
        inputs,
        artifacts,
        outputs: Default::default(),
    };
    manifest.save(out)?;
    eprintln!(
        "preprocessed {} documents ({} per view) into {}",
        prepared.bundle.documents.len(),
        prepared.bundle.original_count(),
        out.display()
    );
    Ok(manifest)
}

/// A verified, loaded run directory.
pub struct Run {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub bundle: CorpusBundle,
    pub graphs: InfoGraphs,
    pub projections: Projections,
}

impl Run {
    /// Opens `dir` after checking every artifact digest and that `config`
    /// agrees with the preprocessing snapshot.
    pub fn open(dir: &Path, config: &RunConfig) -> Result<Self, CliError> {
        let manifest = RunManifest::load(dir)?;
        manifest.verify_artifacts(dir)?;
        manifest.verify_config(config)?;
        let bundle = CorpusBundle::load(&dir.join(BUNDLE_FILE))?;
        let adjacency = |kind| CsrMatrix::load_triplets(&dir.join(graph_path(kind)));
        let graphs = InfoGraphs {
            word: InfoGraph::new(
                GraphKind::Word,
                bundle.word_embeddings.clone(),
                adjacency(GraphKind::Word)?,
            )?,
            pos: InfoGraph::new(
                GraphKind::Pos,
                Matrix::identity(bundle.pos_vocab.len()),
                adjacency(GraphKind::Pos)?,
            )?,
            entity: InfoGraph::new(
                GraphKind::Entity,
                bundle.entity_embeddings.clone(),
                adjacency(GraphKind::Entity)?,
            )?,
        };
        let projection = |kind| -> Result<ProjectionMatrix, CliError> {
            Ok(ProjectionMatrix {
                kind,
                values: CsrMatrix::load_triplets(&dir.join(projection_path(kind)))?,
            })
        };
        let projections = Projections {
            word: projection(GraphKind::Word)?,
            pos: projection(GraphKind::Pos)?,
            entity: projection(GraphKind::Entity)?,
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            bundle,
            graphs,
            projections,
        })
    }

    /// The bundle re-split for repeat `k`; repeat 0 is the stored split.
    pub fn bundle_for(&self, config: &RunConfig, repeat: u64) -> Result<CorpusBundle, CliError> {
        if repeat == 0 {
            return Ok(self.bundle.clone());
        }
        Ok(split_corpus(
            &self.bundle,
            config.split.per_class_labeled,
            config.seed.wrapping_add(repeat),
        )?)
    }

    pub fn repeat_dir(&self, repeat: u64) -> PathBuf {
        self.dir.join(repeat_rel(repeat))
    }
}

fn repeat_rel(repeat: u64) -> PathBuf {
    if repeat == 0 {
        PathBuf::new()
    } else {
        PathBuf::from(format!("repeat-{repeat}"))
    }
}

/// Checkpoint tag: the canonical config plus the repeat index.
pub fn checkpoint_hash(config: &RunConfig, repeat: u64) -> [u8; 32] {
    config_hash(format!("{}\nrepeat = {repeat}\n", config.to_toml()).as_bytes())
}

pub fn load_model(path: &Path, config: &RunConfig, repeat: u64) -> Result<ModelParams, CliError> {
    if !path.is_file() {
        return Err(CliError::Usage(format!(
            "{} not found; run `train` first",
            path.display()
        )));
    }
    load_checkpoint(path, &checkpoint_hash(config, repeat)).map_err(|e| match e {
        midelight::Error::Checkpoint(m) if m.contains("hash") => CliError::Stale(format!(
            "{} was trained with a different config",
            path.display()
        )),
        other => other.into(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub repeat: u64,
    pub seed: u64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub validation: Metrics,
    pub last: EpochRecord,
}

#[derive(Debug, Clone, Serialize)]
pub struct RepeatSummary {
    pub repeats: Vec<RepeatResult>,
    pub mean_test_accuracy: f64,
    pub mean_test_macro_f1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RepeatResult {
    pub repeat: u64,
    pub best_epoch: usize,
    pub test: Metrics,
}

pub struct TrainArgs {
    pub run: PathBuf,
    pub config: RunConfig,
    pub repeats: u64,
    pub dump_pseudo_labels: bool,
}

struct Fitted {
    params: ModelParams,
    report: TrainReport,
    history: Vec<EpochRecord>,
}

fn fit(
    run: &Run,
    bundle: &CorpusBundle,
    train: &TrainConfig,
    repeat: u64,
    dump: Option<&Path>,
) -> Result<Fitted, CliError> {
    let problem = Problem::new(bundle, &run.graphs, &run.projections, &train.model_config())?;
    let mut dump_err: Option<CliError> = None;
    let mut observer = |view: &EpochView<'_>| {
        let (Some(dir), Some(labels)) = (dump, view.labels) else {
            return;
        };
        if dump_err.is_some() {
            return;
        }
        let path = dir.join(format!("epoch-{:04}.tsv", view.record.epoch));
        let mut buf = Vec::new();
        let res = write_assignment_tsv(
            &mut buf,
            labels,
            &view.problem.org_ids,
            &view.problem.aug_ids,
        )
        .map_err(CliError::from)
        .and_then(|_| write_file(&path, &buf));
        if let Err(e) = res {
            dump_err = Some(e);
        }
    };
    let outcome = train_with_observer(&problem, &run.graphs, train, Some(&mut observer))?;
    if let Some(e) = dump_err {
        return Err(e);
    }
    let validation = evaluate(
        &outcome.params,
        bundle,
        &run.graphs,
        &run.projections,
        &train.model_config(),
        SplitKind::Validation,
    )?;
    let report = TrainReport {
        repeat,
        seed: train.seed,
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.history.len(),
        stopped_early: outcome.stopped_early,
        validation,
        last: *outcome.history.last().expect("at least one epoch"),
    };
    Ok(Fitted {
        params: outcome.params,
        report,
        history: outcome.history,
    })
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let config = &args.config;
    config.validate()?;
    if args.repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    let run = Run::open(&args.run, config)?;
    let mut manifest = run.manifest.clone();
    write_file(
        &run.dir.join(TRAIN_CONFIG_FILE),
        config.to_toml().as_bytes(),
    )?;
    manifest.record_output(&run.dir, "train.config", Path::new(TRAIN_CONFIG_FILE))?;

    let mut results = Vec::new();
    for k in 0..args.repeats {
        let rel = repeat_rel(k);
        let dir = run.repeat_dir(k);
        create_dir(&dir)?;
        let dump = args.dump_pseudo_labels.then(|| dir.join("pseudo_labels"));
        if let Some(d) = &dump {
            create_dir(d)?;
        }
        let bundle = run.bundle_for(config, k)?;
        let train = config.train_config(k);
        let fitted = fit(&run, &bundle, &train, k, dump.as_deref())?;

        save_checkpoint(
            &dir.join(CHECKPOINT_FILE),
            &fitted.params,
            &checkpoint_hash(config, k),
        )?;
        let mut csv = Vec::new();
        write_history_csv(&mut csv, &fitted.history)?;
        write_file(&dir.join(HISTORY_FILE), &csv)?;
        write_json(&dir.join(REPORT_FILE), &fitted.report)?;
        let prefix = if k == 0 {
            "train".to_string()
        } else {
            format!("repeat-{k}")
        };
        for (role, file) in [
            ("checkpoint", CHECKPOINT_FILE),
            ("history", HISTORY_FILE),
            ("report", REPORT_FILE),
        ] {
            manifest.record_output(&run.dir, &format!("{prefix}.{role}"), &rel.join(file))?;
        }
        eprintln!(
            "repeat {k}: best epoch {} of {}, validation accuracy {:.4}, macro-F1 {:.4}",
            fitted.report.best_epoch,
            fitted.report.epochs_run,
            fitted.report.validation.accuracy,
            fitted.report.validation.macro_f1
        );
        if args.repeats > 1 {
            let test = evaluate(
                &fitted.params,
                &bundle,
                &run.graphs,
                &run.projections,
                &train.model_config(),
                SplitKind::Test,
            )?;
            results.push(RepeatResult {
                repeat: k,
                best_epoch: fitted.report.best_epoch,
                test,
            });
        }
    }
    if args.repeats > 1 {
        let n = results.len() as f64;
        let summary = RepeatSummary {
            mean_test_accuracy: results.iter().map(|r| r.test.accuracy).sum::<f64>() / n,
            mean_test_macro_f1: results.iter().map(|r| r.test.macro_f1).sum::<f64>() / n,
            repeats: results,
        };
        let text = write_json(&run.dir.join("repeats.json"), &summary)?;
        manifest.record_output(&run.dir, "train.repeats", Path::new("repeats.json"))?;
        print!("{text}");
    }
    manifest.save(&run.dir)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub split: SplitKind,
    pub repeat: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class_f1: Vec<f64>,
}

pub struct EvaluateArgs {
    pub run: PathBuf,
    pub config: RunConfig,
    pub split: SplitKind,
    pub repeat: u64,
    pub out: Option<PathBuf>,
}

pub fn evaluate_cmd(args: &EvaluateArgs) -> Result<EvalReport, CliError> {
    let config = &args.config;
    config.validate()?;
    let run = Run::open(&args.run, config)?;
    let dir = run.repeat_dir(args.repeat);
    let params = load_model(&dir.join(CHECKPOINT_FILE), config, args.repeat)?;
    let bundle = run.bundle_for(config, args.repeat)?;
    let m = evaluate(
        &params,
        &bundle,
        &run.graphs,
        &run.projections,
        &config.train.model_config(),
        args.split,
    )?;
    let report = EvalReport {
        split: args.split,
        repeat: args.repeat,
        accuracy: m.accuracy,
        macro_f1: m.macro_f1,
        per_class_f1: m.per_class_f1,
    };
    let split_name = format!("{:?}", args.split).to_lowercase();
    let default_rel = repeat_rel(args.repeat).join(format!("metrics-{split_name}.json"));
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| run.dir.join(&default_rel));
    let text = write_json(&out, &report)?;
    if args.out.is_none() {
        let mut manifest = run.manifest.clone();
        let prefix = if args.repeat == 0 {
            "evaluate".to_string()
        } else {
            format!("repeat-{}.evaluate", args.repeat)
        };
        manifest.record_output(&run.dir, &format!("{prefix}.{split_name}"), &default_rel)?;
        manifest.save(&run.dir)?;
    }
    print!("{text}");
    Ok(report)
}

/// Row labels of the ablation table, in output order.
pub const ABLATION_VARIANTS: [&str; 8] = [
    "w/o word graph",
    "w/o POS graph",
    "w/o entity graph",
    "w/o CCL and ICL",
    "w/o CCL",
    "w/o ICL",
    "parallel",
    "MI-DELIGHT",
];

pub fn ablation_variant(base: &TrainConfig, name: &str) -> Option<TrainConfig> {
    let mut c = base.clone();
    match name {
        "w/o word graph" => c.use_word = false,
        "w/o POS graph" => c.use_pos = false,
        "w/o entity graph" => c.use_entity = false,
        "w/o CCL and ICL" => {
            c.use_ccl = false;
            c.use_icl = false;
        }
        "w/o CCL" => c.use_ccl = false,
        "w/o ICL" => c.use_icl = false,
        "parallel" => c.layout = TaskLayout::Parallel,
        "MI-DELIGHT" => {}
        _ => return None,
    }
    Some(c)
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub val_accuracy: f64,
    pub val_macro_f1: f64,
    pub test_accuracy: f64,
    pub test_macro_f1: f64,
}

pub fn ablation_markdown(rows: &[AblationRow]) -> String {
    let mut s = String::from(
        "| variant | best epoch | epochs | val acc | val macro-F1 | test acc | test macro-F1 |\n\
         |---|---:|---:|---:|---:|---:|---:|\n",
    );
    for r in rows {
        s.push_str(&format!(
            "| {} | {} | {} | {:.4} | {:.4} | {:.4} | {:.4} |\n",
            r.variant,
            r.best_epoch,
            r.epochs_run,
            r.val_accuracy,
            r.val_macro_f1,
            r.test_accuracy,
            r.test_macro_f1
        ));
    }
    s
}

pub struct AblateArgs {
    pub run: PathBuf,
    pub config: RunConfig,
}

pub fn ablate(args: &AblateArgs) -> Result<Vec<AblationRow>, CliError> {
    let config = &args.config;
    config.validate()?;
    let run = Run::open(&args.run, config)?;
    let base = config.train_config(0);
    let mut rows = Vec::new();
    for name in ABLATION_VARIANTS {
        let train = ablation_variant(&base, name).expect("known variant");
        let fitted = fit(&run, &run.bundle, &train, 0, None)?;
        let test = evaluate(
            &fitted.params,
            &run.bundle,
            &run.graphs,
            &run.projections,
            &train.model_config(),
            SplitKind::Test,
        )?;
        eprintln!("{name}: test accuracy {:.4}", test.accuracy);
        rows.push(AblationRow {
            variant: name.to_string(),
            best_epoch: fitted.report.best_epoch,
            epochs_run: fitted.report.epochs_run,
            val_accuracy: fitted.report.validation.accuracy,
            val_macro_f1: fitted.report.validation.macro_f1,
            test_accuracy: test.accuracy,
            test_macro_f1: test.macro_f1,
        });
    }
    let table = ablation_markdown(&rows);
    write_file(&run.dir.join("ablation.md"), table.as_bytes())?;
    write_json(&run.dir.join("ablation.json"), &rows)?;
    let mut manifest = run.manifest.clone();
    manifest.record_output(&run.dir, "ablate.table", Path::new("ablation.md"))?;
    manifest.record_output(&run.dir, "ablate.json", Path::new("ablation.json"))?;
    manifest.save(&run.dir)?;
    print!("{table}");
    Ok(rows)
}
