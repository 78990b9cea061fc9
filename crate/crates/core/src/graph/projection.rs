use std::collections::BTreeMap;

use super::GraphKind;
use crate::corpus::{CorpusBundle, Vocab};
use crate::error::Result;
use crate::numerics::CsrMatrix;

/// Row `i` links document row `i` of the bundle to the nodes of one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    pub kind: GraphKind,
    pub values: CsrMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projections {
    pub word: ProjectionMatrix,
    pub pos: ProjectionMatrix,
    pub entity: ProjectionMatrix,
}

impl Projections {
    pub fn get(&self, kind: GraphKind) -> &ProjectionMatrix {
        match kind {
            GraphKind::Word => &self.word,
            GraphKind::Pos => &self.pos,
            GraphKind::Entity => &self.entity,
        }
    }
}

/// TF-IDF rows for words and POS tags, binary incidence for entities.
///
/// With `R` document rows (both views), `tf` the count of a node in a row and
/// `df` the number of rows containing it, the weight is
/// `tf · max(ln(R / (1 + df)), 0)`.
pub fn compute_projection_matrices(bundle: &CorpusBundle) -> Result<Projections> {
    let word = tf_idf(bundle, &bundle.word_vocab, |d| &d.tokens)?;
    let pos = tf_idf(bundle, &bundle.pos_vocab, |d| &d.pos_tags)?;
    let mut incidence = Vec::new();
    for (row, d) in bundle.documents.iter().enumerate() {
        let mut cols = bundle.entity_vocab.encode(&d.entities)?;
        cols.sort_unstable();
        cols.dedup();
        incidence.extend(cols.into_iter().map(|j| (row, j, 1.0)));
    }
    let entity =
        CsrMatrix::from_triplets(bundle.documents.len(), bundle.entity_vocab.len(), incidence)?;
    Ok(Projections {
        word: ProjectionMatrix {
            kind: GraphKind::Word,
            values: word,
        },
        pos: ProjectionMatrix {
            kind: GraphKind::Pos,
            values: pos,
        },
        entity: ProjectionMatrix {
            kind: GraphKind::Entity,
            values: entity,
        },
    })
}

fn tf_idf(
    bundle: &CorpusBundle,
    vocab: &Vocab,
    terms: impl Fn(&crate::corpus::Document) -> &Vec<String>,
) -> Result<CsrMatrix> {
    let rows = bundle.documents.len();
    let mut counts: Vec<BTreeMap<usize, usize>> = Vec::with_capacity(rows);
    let mut df = vec![0usize; vocab.len()];
    for d in &bundle.documents {
        let mut c = BTreeMap::new();
        for j in vocab.encode(terms(d))? {
            *c.entry(j).or_insert(0) += 1;
        }
        for &j in c.keys() {
            df[j] += 1;
        }
        counts.push(c);
    }
    let idf: Vec<f64> = df
        .iter()
        .map(|&f| (rows as f64 / (1.0 + f as f64)).ln().max(0.0))
        .collect();
    let triplets = counts
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.iter().map(move |(&j, &tf)| (i, j, tf as f64)))
        .map(|(i, j, tf)| (i, j, tf * idf[j]))
        .collect();
    CsrMatrix::from_triplets(rows, vocab.len(), triplets)
}
