use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphKind, InfoGraphs};
use crate::numerics::Matrix;

/// Where the classification head reads from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskLayout {
    /// `Z̃ → Ũ → Q`: the classifier consumes the cluster-level features.
    #[default]
    Hierarchical,
    /// Both heads branch from `Z̃`.
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinalActivation {
    #[default]
    Linear,
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: usize,
    pub use_word: bool,
    pub use_pos: bool,
    pub use_entity: bool,
    pub layout: TaskLayout,
    pub final_activation: FinalActivation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            use_word: true,
            use_pos: true,
            use_entity: true,
            layout: TaskLayout::Hierarchical,
            final_activation: FinalActivation::Linear,
        }
    }
}

impl ModelConfig {
    fn enabled(&self, kind: GraphKind) -> bool {
        match kind {
            GraphKind::Word => self.use_word,
            GraphKind::Pos => self.use_pos,
            GraphKind::Entity => self.use_entity,
        }
    }

    /// Sources that take part in the encoder, in concatenation order. A graph
    /// with no nodes is skipped even when enabled.
    pub fn active_sources(&self, graphs: &InfoGraphs) -> Vec<GraphKind> {
        GraphKind::CONCAT_ORDER
            .into_iter()
            .filter(|&k| self.enabled(k) && graphs.get(k).node_count > 0)
            .collect()
    }
}

/// Two GCN layers for one source graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub kind: GraphKind,
    /// `f_π x h`
    pub w0: Matrix,
    /// `h x h`
    pub w1: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub encoders: Vec<Encoder>,
    /// `d_Z x ⌊d_Z/2⌋`
    pub phi_weight: Matrix,
    pub phi_bias: Matrix,
    /// `⌊d_Z/2⌋ x c` (hierarchical) or `d_Z x c` (parallel)
    pub psi_weight: Matrix,
    pub psi_bias: Matrix,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let limit = (6.0 / (rows + cols).max(1) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-limit..limit))
}

impl ModelParams {
    /// Glorot-uniform weights and zero biases, drawn from one seeded stream
    /// in parameter order.
    pub fn init(
        config: &ModelConfig,
        graphs: &InfoGraphs,
        num_classes: usize,
        seed: u64,
    ) -> Result<Self> {
        let sources = config.active_sources(graphs);
        if sources.is_empty() {
            return Err(Error::InvalidArgument("no source graph is enabled".into()));
        }
        if config.hidden == 0 || num_classes == 0 {
            return Err(Error::InvalidArgument(
                "hidden width and class count must be positive".into(),
            ));
        }
        let h = config.hidden;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoders = sources
            .iter()
            .map(|&kind| {
                let f = graphs.get(kind).features.cols();
                Encoder {
                    kind,
                    w0: glorot(&mut rng, f, h),
                    w1: glorot(&mut rng, h, h),
                }
            })
            .collect();
        let d_z = sources.len() * h;
        let d_u = d_z / 2;
        let psi_in = match config.layout {
            TaskLayout::Hierarchical => d_u,
            TaskLayout::Parallel => d_z,
        };
        Ok(Self {
            encoders,
            phi_weight: glorot(&mut rng, d_z, d_u),
            phi_bias: Matrix::zeros(1, d_u),
            psi_weight: glorot(&mut rng, psi_in, num_classes),
            psi_bias: Matrix::zeros(1, num_classes),
        })
    }

    pub fn hidden(&self) -> usize {
        self.encoders.first().map_or(0, |e| e.w1.cols())
    }

    pub fn d_z(&self) -> usize {
        self.phi_weight.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.psi_weight.cols()
    }

    pub fn sources(&self) -> Vec<GraphKind> {
        self.encoders.iter().map(|e| e.kind).collect()
    }

    /// Every tensor with a stable name, in the order the tape registers them.
    pub fn named(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for e in &self.encoders {
            out.push((format!("encoder.{}.w0", e.kind.as_str()), &e.w0));
            out.push((format!("encoder.{}.w1", e.kind.as_str()), &e.w1));
        }
        out.push(("phi.weight".into(), &self.phi_weight));
        out.push(("phi.bias".into(), &self.phi_bias));
        out.push(("psi.weight".into(), &self.psi_weight));
        out.push(("psi.bias".into(), &self.psi_bias));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::new();
        for e in &mut self.encoders {
            let k = e.kind.as_str();
            out.push((format!("encoder.{k}.w0"), &mut e.w0));
            out.push((format!("encoder.{k}.w1"), &mut e.w1));
        }
        out.push(("phi.weight".into(), &mut self.phi_weight));
        out.push(("phi.bias".into(), &mut self.phi_bias));
        out.push(("psi.weight".into(), &mut self.psi_weight));
        out.push(("psi.bias".into(), &mut self.psi_bias));
        out
    }

    pub fn tensors(&self) -> Vec<Matrix> {
        self.named().into_iter().map(|(_, m)| m.clone()).collect()
    }

    /// Replaces every tensor, in [`ModelParams::named`] order.
    pub fn set_tensors(&mut self, tensors: &[Matrix]) -> Result<()> {
        let mut slots = self.named_mut();
        if slots.len() != tensors.len() {
            return Err(Error::Shape(format!(
                "{} tensors for {} slots",
                tensors.len(),
                slots.len()
            )));
        }
        for ((name, slot), t) in slots.iter_mut().zip(tensors) {
            if slot.shape() != t.shape() {
                return Err(Error::Shape(format!(
                    "`{name}`: {:?} for {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            **slot = t.clone();
        }
        Ok(())
    }

    /// Rebuilds parameters from named tensors, e.g. those read from a
    /// checkpoint.
    pub fn from_named(tensors: Vec<(String, Matrix)>) -> Result<Self> {
        let mut map: std::collections::HashMap<String, Matrix> = tensors.into_iter().collect();
        let mut take = |name: &str| {
            map.remove(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))
        };
        let mut encoders = Vec::new();
        for kind in GraphKind::CONCAT_ORDER {
            let k = kind.as_str();
            if let Ok(w0) = take(&format!("encoder.{k}.w0")) {
                encoders.push(Encoder {
                    kind,
                    w0,
                    w1: take(&format!("encoder.{k}.w1"))?,
                });
            }
        }
        let params = Self {
            encoders,
            phi_weight: take("phi.weight")?,
            phi_bias: take("phi.bias")?,
            psi_weight: take("psi.weight")?,
            psi_bias: take("psi.bias")?,
        };
        if let Some(extra) = map.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected tensor `{extra}`")));
        }
        Ok(params)
    }
}
