//! Load, augment, split and build graphs in one call.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{
    augment_corpus, load_corpus, split_corpus, AugmentStrategy, CorpusBundle, Rejection,
    DEFAULT_AUGMENT_RATE,
};
use crate::error::Result;
use crate::graph::{
    build_info_graphs, compute_projection_matrices, InfoGraphs, Projections, DEFAULT_WINDOW,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareOptions {
    pub strategy: AugmentStrategy,
    pub table: Option<PathBuf>,
    pub rate: f64,
    pub augment_seed: u64,
    pub per_class_labeled: usize,
    pub split_seed: u64,
    pub window: usize,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self {
            strategy: AugmentStrategy::Deletion,
            table: None,
            rate: DEFAULT_AUGMENT_RATE,
            augment_seed: 0,
            per_class_labeled: 20,
            split_seed: 0,
            window: DEFAULT_WINDOW,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub bundle: CorpusBundle,
    pub graphs: InfoGraphs,
    pub projections: Projections,
    pub rejected: Vec<Rejection>,
}

pub fn prepare(
    corpus: &Path,
    word_embeddings: &Path,
    entity_embeddings: &Path,
    options: &PrepareOptions,
) -> Result<Prepared> {
    let loaded = load_corpus(corpus, word_embeddings, entity_embeddings)?;
    let augmented = augment_corpus(
        &loaded.bundle,
        options.strategy,
        options.table.as_deref(),
        options.rate,
        options.augment_seed,
    )?;
    let bundle = split_corpus(&augmented, options.per_class_labeled, options.split_seed)?;
    let (graphs, projections) = build(&bundle, options.window)?;
    Ok(Prepared {
        bundle,
        graphs,
        projections,
        rejected: loaded.rejected,
    })
}

/// Graphs and projections of an already augmented bundle.
pub fn build(bundle: &CorpusBundle, window: usize) -> Result<(InfoGraphs, Projections)> {
    Ok((
        build_info_graphs(bundle, window)?,
        compute_projection_matrices(bundle)?,
    ))
}
