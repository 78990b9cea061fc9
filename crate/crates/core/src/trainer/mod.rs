//! Full-batch training on the combined objective, early stopping and
//! evaluation.

mod metrics;

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::contrastive::{ccl_loss, icl_loss, CclOptions, PseudoLabels};
use crate::corpus::{CorpusBundle, SplitKind};
use crate::error::{Error, Result};
use crate::graph::{InfoGraphs, Projections};
use crate::model::{
    forward, predict, EncoderInputs, FinalActivation, ForwardOutputs, ForwardVars, ModelConfig,
    ModelParams, TaskLayout,
};
use crate::numerics::{grad_check, Adam, AdamConfig, GradCheckReport, Matrix, Tape, Var};

pub use metrics::{compute_metrics, macro_f1, per_class_f1, Metrics};

/// Floor applied inside the cross-entropy log.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopMetric {
    #[default]
    MacroF1,
    Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub tau: f64,
    pub eta: f64,
    pub zeta: f64,
    pub patience: usize,
    pub seed: u64,
    pub hidden: usize,
    pub use_word: bool,
    pub use_pos: bool,
    pub use_entity: bool,
    pub use_icl: bool,
    pub use_ccl: bool,
    pub layout: TaskLayout,
    pub final_activation: FinalActivation,
    pub ccl_mean_positives: bool,
    pub ccl_pool: crate::contrastive::CclPool,
    pub stop_metric: StopMetric,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            epochs: 500,
            lr: adam.lr,
            tau: 0.5,
            eta: 1.0,
            zeta: 1.0,
            patience: 30,
            seed: 0,
            hidden: 64,
            use_word: true,
            use_pos: true,
            use_entity: true,
            use_icl: true,
            use_ccl: true,
            layout: TaskLayout::Hierarchical,
            final_activation: FinalActivation::Linear,
            ccl_mean_positives: false,
            ccl_pool: Default::default(),
            stop_metric: StopMetric::MacroF1,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.eps,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive");
        }
        if !(self.eta >= 0.0 && self.zeta >= 0.0 && self.eta.is_finite() && self.zeta.is_finite()) {
            return bad("eta and zeta must be finite and non-negative");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be finite and non-negative");
        }
        if self.hidden == 0 {
            return bad("hidden width must be positive");
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            hidden: self.hidden,
            use_word: self.use_word,
            use_pos: self.use_pos,
            use_entity: self.use_entity,
            layout: self.layout,
            final_activation: self.final_activation,
        }
    }

    pub fn ccl_options(&self) -> CclOptions {
        CclOptions {
            mean_positives: self.ccl_mean_positives,
            pool: self.ccl_pool,
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    /// Weights actually applied to the contrastive terms.
    pub fn effective_weights(&self) -> (f64, f64) {
        (
            if self.use_icl { self.eta } else { 0.0 },
            if self.use_ccl { self.zeta } else { 0.0 },
        )
    }
}

/// `ce + η·icl + ζ·ccl`
pub fn total_loss(ce: f64, icl: f64, ccl: f64, eta: f64, zeta: f64) -> f64 {
    ce + eta * icl + zeta * ccl
}

/// Mean negative log-probability of the gold class over `rows`.
pub fn ce_loss(tape: &mut Tape, q: Var, rows: &[usize], labels: &[usize]) -> Result<Var> {
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} training rows with {} labels",
            rows.len(),
            labels.len()
        )));
    }
    let classes = tape.value(q).cols();
    let picked = tape.gather_rows(q, Arc::new(rows.to_vec()))?;
    let log_q = tape.log(picked, LOG_FLOOR);
    let mut weights = Matrix::zeros(rows.len(), classes);
    for (r, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::IndexOutOfRange {
                index: y,
                size: classes,
            });
        }
        weights.set(r, y, -1.0 / rows.len() as f64);
    }
    tape.weighted_sum(log_q, Arc::new(weights))
}

pub fn ce_loss_value(q: &Matrix, rows: &[usize], labels: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let v = tape.constant(q.clone());
    let l = ce_loss(&mut tape, v, rows, labels)?;
    Ok(tape.value(l).get(0, 0))
}

/// The supervised rows of a bundle. Only train and validation labels are
/// ever read here.
#[derive(Debug, Clone)]
pub struct Problem {
    pub inputs: EncoderInputs,
    pub pairing: Vec<usize>,
    pub train_rows: Vec<usize>,
    pub train_labels: Vec<usize>,
    pub val_rows: Vec<usize>,
    pub val_labels: Vec<usize>,
    pub num_classes: usize,
    pub org_ids: Vec<u64>,
    pub aug_ids: Vec<u64>,
}

fn labelled(bundle: &CorpusBundle, split: SplitKind) -> Result<(Vec<usize>, Vec<usize>)> {
    let rows = bundle.split_rows(split)?;
    let labels = rows
        .iter()
        .map(|&r| {
            let d = &bundle.documents[r];
            d.label.ok_or(Error::MissingLabel(d.doc_id))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, labels))
}

impl Problem {
    pub fn new(
        bundle: &CorpusBundle,
        graphs: &InfoGraphs,
        projections: &Projections,
        config: &ModelConfig,
    ) -> Result<Self> {
        let pairing = bundle
            .pairing()
            .ok_or_else(|| Error::InvalidArgument("training needs an augmented bundle".into()))?;
        let (train_rows, train_labels) = labelled(bundle, SplitKind::Train)?;
        let (val_rows, val_labels) = labelled(bundle, SplitKind::Validation)?;
        if train_rows.is_empty() || val_rows.is_empty() {
            return Err(Error::InvalidArgument(
                "training needs nonempty train and validation splits".into(),
            ));
        }
        let sources = config.active_sources(graphs);
        let inputs = EncoderInputs::new(graphs, projections, &sources)?;
        if inputs.rows != bundle.documents.len() {
            return Err(Error::Shape(format!(
                "projections cover {} of {} documents",
                inputs.rows,
                bundle.documents.len()
            )));
        }
        let n = bundle.original_count();
        let ids: Vec<u64> = bundle.documents.iter().map(|d| d.doc_id).collect();
        Ok(Self {
            inputs,
            pairing,
            train_rows,
            train_labels,
            val_rows,
            val_labels,
            num_classes: bundle.num_classes,
            org_ids: ids[..n].to_vec(),
            aug_ids: ids[n..].to_vec(),
        })
    }
}

/// Component losses of one evaluation of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub ce: f64,
    pub icl: f64,
    pub ccl: f64,
    pub total: f64,
}

struct Objective {
    vars: ForwardVars,
    labels: Option<PseudoLabels>,
    ce: Var,
    icl: Option<Var>,
    ccl: Option<Var>,
    total: Var,
}

impl Objective {
    fn parts(&self, tape: &Tape) -> LossParts {
        let v = |x: Option<Var>| x.map_or(0.0, |x| tape.value(x).get(0, 0));
        LossParts {
            ce: v(Some(self.ce)),
            icl: v(self.icl),
            ccl: v(self.ccl),
            total: v(Some(self.total)),
        }
    }
}

/// Records the full objective on `tape`. Pseudo-labels are rebuilt from the
/// current embeddings unless `fixed` supplies them.
fn objective(
    tape: &mut Tape,
    problem: &Problem,
    params: &ModelParams,
    config: &TrainConfig,
    fixed: Option<&PseudoLabels>,
) -> Result<Objective> {
    let vars = forward(tape, &problem.inputs, params, &config.model_config())?;
    let ce = ce_loss(tape, vars.q, &problem.train_rows, &problem.train_labels)?;
    let (eta, zeta) = config.effective_weights();
    let mut total = ce;
    let icl = if config.use_icl {
        let l = icl_loss(tape, vars.z_tilde, &problem.pairing, config.tau)?;
        let w = tape.scale(l, eta);
        total = tape.add(total, w)?;
        Some(l)
    } else {
        None
    };
    let mut labels = None;
    let ccl = if config.use_ccl {
        let pl = match fixed {
            Some(l) => l.clone(),
            None => PseudoLabels::from_embeddings(tape.value(vars.z_tilde))?,
        };
        let l = ccl_loss(tape, vars.u_tilde, &pl, config.tau, config.ccl_options())?;
        let w = tape.scale(l, zeta);
        total = tape.add(total, w)?;
        labels = Some(pl);
        Some(l)
    } else {
        None
    };
    Ok(Objective {
        vars,
        labels,
        ce,
        icl,
        ccl,
        total,
    })
}

/// Loss and parameter gradients at `params`, in [`ModelParams::named`]
/// order, plus the smallest distance of any ReLU input from its kink.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub parts: LossParts,
    pub grads: Vec<Matrix>,
    pub relu_margin: f64,
    pub labels: Option<PseudoLabels>,
}

pub fn loss_and_grads(
    problem: &Problem,
    params: &ModelParams,
    config: &TrainConfig,
    fixed: Option<&PseudoLabels>,
) -> Result<LossEval> {
    let mut tape = Tape::new();
    let obj = objective(&mut tape, problem, params, config, fixed)?;
    tape.backward(obj.total)?;
    Ok(LossEval {
        parts: obj.parts(&tape),
        grads: obj.vars.params.grads(&tape),
        relu_margin: tape.min_relu_margin(),
        labels: obj.labels,
    })
}

/// Finite-difference check of the full objective at `params`, holding the
/// pseudo-labels of `params` fixed. Also returns the smallest ReLU margin
/// at `params`, which must comfortably exceed `eps` for the check to be
/// meaningful.
pub fn check_gradients(
    problem: &Problem,
    params: &ModelParams,
    config: &TrainConfig,
    eps: f64,
    seed: u64,
) -> Result<(GradCheckReport, f64)> {
    let at = loss_and_grads(problem, params, config, None)?;
    let labels = at.labels.clone();
    let template = params.clone();
    let report = grad_check(
        |tensors| {
            let mut p = template.clone();
            p.set_tensors(tensors)?;
            let e = loss_and_grads(problem, &p, config, labels.as_ref())?;
            Ok((e.parts.total, e.grads))
        },
        &params.tensors(),
        eps,
        seed,
    )?;
    Ok((report, at.relu_margin))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub ce: f64,
    pub icl: f64,
    pub ccl: f64,
    pub total: f64,
    pub val_acc: f64,
    pub val_macro_f1: f64,
}

/// What an observer sees after each epoch's forward pass, before the step.
pub struct EpochView<'a> {
    pub record: &'a EpochRecord,
    pub outputs: &'a ForwardOutputs,
    pub labels: Option<&'a PseudoLabels>,
    pub problem: &'a Problem,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub params: ModelParams,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
}

pub fn train(problem: &Problem, graphs: &InfoGraphs, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_observer(problem, graphs, config, None)
}

/// Runs the epoch loop. Each epoch evaluates the objective once, scores the
/// validation rows from that same forward pass, and then takes one Adam
/// step. The parameters a record describes are the ones before its step.
pub fn train_with_observer(
    problem: &Problem,
    graphs: &InfoGraphs,
    config: &TrainConfig,
    mut observer: Option<&mut dyn FnMut(&EpochView<'_>)>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut params = ModelParams::init(
        &config.model_config(),
        graphs,
        problem.num_classes,
        config.seed,
    )?;
    let tensors = params.tensors();
    let mut adam = Adam::new(config.adam(), tensors.iter());
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        let mut tape = Tape::new();
        let obj = objective(&mut tape, problem, &params, config, None)?;
        let parts = obj.parts(&tape);
        for (term, v) in [
            ("ce", parts.ce),
            ("icl", parts.icl),
            ("ccl", parts.ccl),
            ("total", parts.total),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, term });
            }
        }
        let q = tape.value(obj.vars.q);
        let preds: Vec<usize> = predict(&q.gather_rows(&problem.val_rows));
        let val = compute_metrics(&preds, &problem.val_labels, problem.num_classes)?;
        let record = EpochRecord {
            epoch,
            ce: parts.ce,
            icl: parts.icl,
            ccl: parts.ccl,
            total: parts.total,
            val_acc: val.accuracy,
            val_macro_f1: val.macro_f1,
        };
        history.push(record);
        if let Some(obs) = observer.as_mut() {
            let outputs = ForwardOutputs::from_tape(&tape, &obj.vars);
            obs(&EpochView {
                record: &record,
                outputs: &outputs,
                labels: obj.labels.as_ref(),
                problem,
            });
        }

        let score = match config.stop_metric {
            StopMetric::MacroF1 => val.macro_f1,
            StopMetric::Accuracy => val.accuracy,
        };
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, epoch, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                stopped_early = true;
                break;
            }
        }
        if epoch == config.epochs {
            break;
        }

        tape.backward(obj.total)?;
        let grads = obj.vars.params.grads(&tape);
        let mut named = params.named_mut();
        let mut slots: Vec<(&str, &mut Matrix)> = named
            .iter_mut()
            .map(|(n, m)| (n.as_str(), &mut **m))
            .collect();
        let grad_refs: Vec<&Matrix> = grads.iter().collect();
        adam.step(&mut slots, &grad_refs)?;
    }

    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        params,
        best_epoch,
        history,
        stopped_early,
    })
}

/// Scores `params` on one split of the bundle. Rows of every split take
/// part in the forward pass; only the requested split's labels are read.
pub fn evaluate(
    params: &ModelParams,
    bundle: &CorpusBundle,
    graphs: &InfoGraphs,
    projections: &Projections,
    config: &ModelConfig,
    split: SplitKind,
) -> Result<Metrics> {
    let (rows, gold) = labelled(bundle, split)?;
    if rows.is_empty() {
        return Err(Error::InvalidArgument(format!("split {split:?} is empty")));
    }
    let inputs = EncoderInputs::new(graphs, projections, &params.sources())?;
    let out = ForwardOutputs::compute(&inputs, params, config)?;
    let preds = predict(&out.q.gather_rows(&rows));
    compute_metrics(&preds, &gold, params.num_classes())
}

pub fn write_history_csv(mut w: impl Write, history: &[EpochRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(&mut w);
    for r in history {
        out.serialize(r)
            .map_err(|e| Error::InvalidArgument(format!("history CSV: {e}")))?;
    }
    out.flush()
        .map_err(|e| Error::io(std::path::Path::new("<history>"), e))
}
