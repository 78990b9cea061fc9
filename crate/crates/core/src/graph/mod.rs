//! The word, POS and entity graphs and the text-to-node projections that
//! connect documents to them. Documents are never graph nodes themselves.

mod pmi;
mod projection;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusBundle;
use crate::error::Result;
use crate::numerics::{dot, CsrMatrix, Matrix};

pub use pmi::{compute_pmi_adjacency, DEFAULT_WINDOW};
pub use projection::{compute_projection_matrices, ProjectionMatrix, Projections};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Word,
    Pos,
    Entity,
}

impl GraphKind {
    /// Concatenation order of the per-source text embeddings.
    pub const CONCAT_ORDER: [GraphKind; 3] = [GraphKind::Word, GraphKind::Entity, GraphKind::Pos];

    pub fn as_str(self) -> &'static str {
        match self {
            GraphKind::Word => "word",
            GraphKind::Pos => "pos",
            GraphKind::Entity => "entity",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoGraph {
    pub kind: GraphKind,
    pub node_count: usize,
    pub features: Matrix,
    pub adjacency: CsrMatrix,
    pub norm_adjacency: CsrMatrix,
}

impl InfoGraph {
    pub fn new(kind: GraphKind, features: Matrix, adjacency: CsrMatrix) -> Result<Self> {
        let norm_adjacency = normalize_adjacency(&adjacency)?;
        if features.rows() != adjacency.rows() {
            return Err(crate::Error::Shape(format!(
                "{} graph: {} feature rows for {} nodes",
                kind.as_str(),
                features.rows(),
                adjacency.rows()
            )));
        }
        Ok(Self {
            kind,
            node_count: adjacency.rows(),
            features,
            adjacency,
            norm_adjacency,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoGraphs {
    pub word: InfoGraph,
    pub pos: InfoGraph,
    pub entity: InfoGraph,
}

impl InfoGraphs {
    pub fn get(&self, kind: GraphKind) -> &InfoGraph {
        match kind {
            GraphKind::Word => &self.word,
            GraphKind::Pos => &self.pos,
            GraphKind::Entity => &self.entity,
        }
    }
}

/// `D̂^{-1/2} (A + I) D̂^{-1/2}` with `D̂` the row sums of `A + I`.
pub fn normalize_adjacency(a: &CsrMatrix) -> Result<CsrMatrix> {
    a.check_symmetric()?;
    if a.values().iter().any(|&v| v < 0.0) {
        return Err(crate::Error::InvalidArgument(
            "adjacency has negative entries".into(),
        ));
    }
    let n = a.rows();
    let mut with_loops: Vec<(usize, usize, f64)> = a.iter().collect();
    with_loops.extend((0..n).map(|i| (i, i, 1.0)));
    let a_hat = CsrMatrix::from_triplets(n, n, with_loops)?;
    let degree: Vec<f64> = (0..n).map(|i| a_hat.row(i).1.iter().sum()).collect();
    let scaled = a_hat
        .iter()
        .map(|(i, j, v)| (i, j, v / (degree[i] * degree[j]).sqrt()))
        .collect();
    CsrMatrix::from_triplets(n, n, scaled)
}

/// `max(cos(x_i, x_j), 0)` between feature rows, zero diagonal. Zero rows
/// have no edges.
pub fn cosine_adjacency(features: &Matrix) -> CsrMatrix {
    let n = features.rows();
    let norms = features.row_norms();
    let mut triplets = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if norms[i] == 0.0 || norms[j] == 0.0 {
                continue;
            }
            let c = (dot(features.row(i), features.row(j)) / (norms[i] * norms[j])).min(1.0);
            if c > 0.0 {
                triplets.push((i, j, c));
                triplets.push((j, i, c));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, triplets).expect("indices in range")
}

/// Builds the three source graphs over every document of the bundle, both
/// views included. The POS graph has one-hot node features.
pub fn build_info_graphs(bundle: &CorpusBundle, window: usize) -> Result<InfoGraphs> {
    let word_seqs = bundle
        .documents
        .iter()
        .map(|d| bundle.word_vocab.encode(&d.tokens))
        .collect::<Result<Vec<_>>>()?;
    let pos_seqs = bundle
        .documents
        .iter()
        .map(|d| bundle.pos_vocab.encode(&d.pos_tags))
        .collect::<Result<Vec<_>>>()?;
    let word = InfoGraph::new(
        GraphKind::Word,
        bundle.word_embeddings.clone(),
        compute_pmi_adjacency(&word_seqs, bundle.word_vocab.len(), window)?,
    )?;
    let pos = InfoGraph::new(
        GraphKind::Pos,
        Matrix::identity(bundle.pos_vocab.len()),
        compute_pmi_adjacency(&pos_seqs, bundle.pos_vocab.len(), window)?,
    )?;
    let entity = InfoGraph::new(
        GraphKind::Entity,
        bundle.entity_embeddings.clone(),
        cosine_adjacency(&bundle.entity_embeddings),
    )?;
    Ok(InfoGraphs { word, pos, entity })
}
