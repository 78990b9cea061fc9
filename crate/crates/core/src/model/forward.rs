use std::sync::Arc;

use super::params::{FinalActivation, ModelConfig, ModelParams, TaskLayout};
use crate::error::{Error, Result};
use crate::graph::{GraphKind, InfoGraphs, Projections};
use crate::numerics::{Matrix, SparseOperand, Tape, Var};

/// Constant operands of one source: normalized adjacency, node features and
/// the text projection.
#[derive(Debug, Clone)]
pub struct SourceInputs {
    pub kind: GraphKind,
    pub norm_adjacency: Arc<SparseOperand>,
    pub features: Arc<Matrix>,
    pub projection: Arc<SparseOperand>,
}

/// Everything the encoder reads that never changes during training.
#[derive(Debug, Clone)]
pub struct EncoderInputs {
    pub sources: Vec<SourceInputs>,
    pub rows: usize,
}

impl EncoderInputs {
    pub fn new(
        graphs: &InfoGraphs,
        projections: &Projections,
        sources: &[GraphKind],
    ) -> Result<Self> {
        let mut rows = None;
        let sources = sources
            .iter()
            .map(|&kind| {
                let g = graphs.get(kind);
                let p = &projections.get(kind).values;
                if p.cols() != g.node_count {
                    return Err(Error::Shape(format!(
                        "{} projection has {} columns for {} nodes",
                        kind.as_str(),
                        p.cols(),
                        g.node_count
                    )));
                }
                if *rows.get_or_insert(p.rows()) != p.rows() {
                    return Err(Error::Shape(
                        "projections disagree on document count".into(),
                    ));
                }
                Ok(SourceInputs {
                    kind,
                    norm_adjacency: SparseOperand::new(g.norm_adjacency.clone()),
                    features: Arc::new(g.features.clone()),
                    projection: SparseOperand::new(p.clone()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            sources,
            rows: rows.unwrap_or(0),
        })
    }
}

/// Tape handles of every parameter, in [`ModelParams::named`] order.
#[derive(Debug, Clone)]
pub struct ParamVars {
    pub encoders: Vec<(Var, Var)>,
    pub phi_weight: Var,
    pub phi_bias: Var,
    pub psi_weight: Var,
    pub psi_bias: Var,
}

impl ParamVars {
    pub fn register(tape: &mut Tape, params: &ModelParams) -> Self {
        let encoders = params
            .encoders
            .iter()
            .map(|e| (tape.param(e.w0.clone()), tape.param(e.w1.clone())))
            .collect();
        Self {
            encoders,
            phi_weight: tape.param(params.phi_weight.clone()),
            phi_bias: tape.param(params.phi_bias.clone()),
            psi_weight: tape.param(params.psi_weight.clone()),
            psi_bias: tape.param(params.psi_bias.clone()),
        }
    }

    pub fn all(&self) -> Vec<Var> {
        let mut v: Vec<Var> = self.encoders.iter().flat_map(|&(a, b)| [a, b]).collect();
        v.extend([
            self.phi_weight,
            self.phi_bias,
            self.psi_weight,
            self.psi_bias,
        ]);
        v
    }

    /// Gradients after `backward`, zero where a parameter was not reached.
    pub fn grads(&self, tape: &Tape) -> Vec<Matrix> {
        self.all()
            .into_iter()
            .map(|v| {
                tape.grad(v).cloned().unwrap_or_else(|| {
                    let (r, c) = tape.value(v).shape();
                    Matrix::zeros(r, c)
                })
            })
            .collect()
    }
}

/// `H = Â ReLU(Â X W0) W1`, with an optional ReLU on the output.
pub fn gcn_forward(
    tape: &mut Tape,
    norm_adjacency: &Arc<SparseOperand>,
    features: Var,
    w0: Var,
    w1: Var,
    final_activation: FinalActivation,
) -> Result<Var> {
    let xw = tape.matmul(features, w0)?;
    let h1 = tape.spmm(norm_adjacency.clone(), xw)?;
    let h1 = tape.relu(h1);
    let hw = tape.matmul(h1, w1)?;
    let h2 = tape.spmm(norm_adjacency.clone(), hw)?;
    Ok(match final_activation {
        FinalActivation::Linear => h2,
        FinalActivation::Relu => tape.relu(h2),
    })
}

/// `P·H` with rows L2-normalized; all-zero rows stay zero.
pub fn aggregate_texts(
    tape: &mut Tape,
    projection: &Arc<SparseOperand>,
    nodes: Var,
) -> Result<Var> {
    let z = tape.spmm(projection.clone(), nodes)?;
    Ok(tape.row_l2_normalize(z))
}

/// Returns `(Z, Z̃)`: per-source text embeddings concatenated in `(w, e, p)`
/// order and their row-normalized form.
pub fn encode_corpus(
    tape: &mut Tape,
    inputs: &EncoderInputs,
    params: &ParamVars,
    final_activation: FinalActivation,
) -> Result<(Var, Var)> {
    if inputs.sources.len() != params.encoders.len() {
        return Err(Error::Shape(format!(
            "{} sources for {} encoders",
            inputs.sources.len(),
            params.encoders.len()
        )));
    }
    let mut blocks = Vec::with_capacity(inputs.sources.len());
    for (src, &(w0, w1)) in inputs.sources.iter().zip(&params.encoders) {
        let x = tape.constant((*src.features).clone());
        let h = gcn_forward(tape, &src.norm_adjacency, x, w0, w1, final_activation)?;
        blocks.push(aggregate_texts(tape, &src.projection, h)?);
    }
    let z = tape.concat_cols(&blocks)?;
    let z_tilde = tape.row_l2_normalize(z);
    Ok((z, z_tilde))
}

/// `U = ReLU(Z̃ W + b)` and its row-normalized form `Ũ`.
pub fn project_ccl(tape: &mut Tape, z_tilde: Var, weight: Var, bias: Var) -> Result<(Var, Var)> {
    let lin = tape.matmul(z_tilde, weight)?;
    let lin = tape.add_row(lin, bias)?;
    let u = tape.relu(lin);
    let u_tilde = tape.row_l2_normalize(u);
    Ok((u, u_tilde))
}

/// `Q = softmax(ReLU(X W + b))` row-wise; returns `(logits, Q)`.
pub fn classify(tape: &mut Tape, features: Var, weight: Var, bias: Var) -> Result<(Var, Var)> {
    let lin = tape.matmul(features, weight)?;
    let lin = tape.add_row(lin, bias)?;
    let logits = tape.relu(lin);
    let q = tape.row_softmax(logits);
    Ok((logits, q))
}

/// Handles of the intermediate results of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub params: ParamVars,
    pub z: Var,
    pub z_tilde: Var,
    pub u: Var,
    pub u_tilde: Var,
    pub logits: Var,
    pub q: Var,
}

pub fn forward(
    tape: &mut Tape,
    inputs: &EncoderInputs,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<ForwardVars> {
    let pv = ParamVars::register(tape, params);
    let (z, z_tilde) = encode_corpus(tape, inputs, &pv, config.final_activation)?;
    let (u, u_tilde) = project_ccl(tape, z_tilde, pv.phi_weight, pv.phi_bias)?;
    let head_input = match config.layout {
        TaskLayout::Hierarchical => u_tilde,
        TaskLayout::Parallel => z_tilde,
    };
    let (logits, q) = classify(tape, head_input, pv.psi_weight, pv.psi_bias)?;
    Ok(ForwardVars {
        params: pv,
        z,
        z_tilde,
        u,
        u_tilde,
        logits,
        q,
    })
}

/// Values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutputs {
    pub z: Matrix,
    pub z_tilde: Matrix,
    pub u: Matrix,
    pub u_tilde: Matrix,
    pub q: Matrix,
}

impl ForwardOutputs {
    pub fn from_tape(tape: &Tape, vars: &ForwardVars) -> Self {
        Self {
            z: tape.value(vars.z).clone(),
            z_tilde: tape.value(vars.z_tilde).clone(),
            u: tape.value(vars.u).clone(),
            u_tilde: tape.value(vars.u_tilde).clone(),
            q: tape.value(vars.q).clone(),
        }
    }

    pub fn compute(
        inputs: &EncoderInputs,
        params: &ModelParams,
        config: &ModelConfig,
    ) -> Result<Self> {
        let mut tape = Tape::new();
        let vars = forward(&mut tape, inputs, params, config)?;
        Ok(Self::from_tape(&tape, &vars))
    }
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn predict(q: &Matrix) -> Vec<usize> {
    (0..q.rows())
        .map(|i| {
            let row = q.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
