//! Corpus ingestion: documents, vocabularies, embedding tables, splits and
//! augmented views.
//!
//! Every external NLP artifact (POS tags, entity links, pretrained vectors,
//! synonym tables) arrives as a file; see [`load_corpus`] and
//! [`augment_corpus`] for the formats.
//!
//! A [`CorpusBundle`] keeps its documents in a fixed row order that the rest
//! of the pipeline relies on: all original documents in input order, then,
//! once augmented, one augmented view per original in the same order. Row
//! `i` and row `i + N` are therefore always a pair.

mod augment;
mod load;
mod split;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub use augment::{augment_corpus, AugmentStrategy, DEFAULT_AUGMENT_RATE};
pub use load::{load_corpus, oov_vector, Loaded, Rejection, OOV_SCALE};
pub use split::split_corpus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Original,
    Augmented,
}

impl View {
    pub fn as_str(self) -> &'static str {
        match self {
            View::Original => "org",
            View::Augmented => "aug",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: u64,
    pub tokens: Vec<String>,
    pub pos_tags: Vec<String>,
    pub entities: Vec<String>,
    /// Gold class; only ever set on original views.
    pub label: Option<usize>,
    pub view: View,
    /// Id of the original this view derives from (its own id for originals).
    pub source_id: u64,
}

/// Insertion-ordered string interner.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(terms: Vec<String>) -> Self {
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { terms, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.terms
    }
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, i: usize) -> &str {
        &self.terms[i]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    /// Index of `term`, inserting it if new. The flag says whether it was.
    pub fn intern(&mut self, term: &str) -> (usize, bool) {
        if let Some(&i) = self.index.get(term) {
            return (i, false);
        }
        let i = self.terms.len();
        self.terms.push(term.to_string());
        self.index.insert(term.to_string(), i);
        (i, true)
    }

    /// Maps a sequence of terms to indices, failing on the first unknown one.
    pub fn encode(&self, terms: &[String]) -> Result<Vec<usize>> {
        terms
            .iter()
            .map(|t| {
                self.get(t)
                    .ok_or_else(|| Error::InvalidArgument(format!("`{t}` not in vocabulary")))
            })
            .collect()
    }
}

/// Document ids of the three evaluation splits, each sorted ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<u64>,
    pub validation: Vec<u64>,
    pub test: Vec<u64>,
}

impl Splits {
    pub fn is_empty(&self) -> bool {
        self.train.is_empty() && self.validation.is_empty() && self.test.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Train,
    Validation,
    Test,
}

impl std::str::FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitKind::Train),
            "validation" | "val" => Ok(SplitKind::Validation),
            "test" => Ok(SplitKind::Test),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusBundle {
    pub documents: Vec<Document>,
    pub word_vocab: Vocab,
    pub pos_vocab: Vocab,
    pub entity_vocab: Vocab,
    /// `|V_w| x f_w`, row `i` belongs to `word_vocab.term(i)`.
    pub word_embeddings: Matrix,
    /// `|V_e| x f_e`
    pub entity_embeddings: Matrix,
    pub splits: Splits,
    pub num_classes: usize,
    /// Pretrained vector file consulted again when augmentation adds words.
    pub word_embedding_source: Option<PathBuf>,
}

impl CorpusBundle {
    pub fn original_count(&self) -> usize {
        self.documents
            .iter()
            .take_while(|d| d.view == View::Original)
            .count()
    }

    pub fn is_augmented(&self) -> bool {
        self.documents.iter().any(|d| d.view == View::Augmented)
    }

    pub fn originals(&self) -> &[Document] {
        &self.documents[..self.original_count()]
    }

    /// Row of each original document id.
    pub fn original_rows(&self) -> HashMap<u64, usize> {
        self.originals()
            .iter()
            .enumerate()
            .map(|(i, d)| (d.doc_id, i))
            .collect()
    }

    /// The paired row of every row (`i ↔ i + N`). `None` before augmentation.
    pub fn pairing(&self) -> Option<Vec<usize>> {
        if !self.is_augmented() {
            return None;
        }
        let n = self.original_count();
        Some(
            (0..2 * n)
                .map(|i| if i < n { i + n } else { i - n })
                .collect(),
        )
    }

    pub fn split_ids(&self, split: SplitKind) -> &[u64] {
        match split {
            SplitKind::Train => &self.splits.train,
            SplitKind::Validation => &self.splits.validation,
            SplitKind::Test => &self.splits.test,
        }
    }

    /// Rows of a split, in the split's id order.
    pub fn split_rows(&self, split: SplitKind) -> Result<Vec<usize>> {
        let rows = self.original_rows();
        self.split_ids(split)
            .iter()
            .map(|id| {
                rows.get(id).copied().ok_or_else(|| {
                    Error::InvalidArgument(format!("split references unknown doc {id}"))
                })
            })
            .collect()
    }

    /// Checks every structural invariant of a bundle.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.documents.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let n = self.original_count();
        let augmented = self.documents.len() - n;
        if augmented != 0 && augmented != n {
            return bad(format!("{n} originals but {augmented} augmented views"));
        }
        let mut seen = std::collections::HashSet::new();
        for (row, d) in self.documents.iter().enumerate() {
            if !seen.insert(d.doc_id) {
                return Err(Error::DuplicateDocId(d.doc_id));
            }
            if d.tokens.len() != d.pos_tags.len() {
                return bad(format!(
                    "doc {}: tokens and POS tags differ in length",
                    d.doc_id
                ));
            }
            match d.view {
                View::Original => {
                    if row >= n || d.source_id != d.doc_id {
                        return bad(format!("doc {}: misplaced original", d.doc_id));
                    }
                }
                View::Augmented => {
                    if d.label.is_some() {
                        return bad(format!("augmented doc {} carries a label", d.doc_id));
                    }
                    if self.documents[row - n].doc_id != d.source_id {
                        return bad(format!("augmented doc {} is not paired in order", d.doc_id));
                    }
                }
            }
            if let Some(c) = d.label {
                if c >= self.num_classes {
                    return bad(format!(
                        "doc {}: label {c} ≥ {}",
                        d.doc_id, self.num_classes
                    ));
                }
            }
            self.word_vocab.encode(&d.tokens)?;
            self.pos_vocab.encode(&d.pos_tags)?;
            self.entity_vocab.encode(&d.entities)?;
        }
        if self.word_embeddings.rows() != self.word_vocab.len()
            || self.entity_embeddings.rows() != self.entity_vocab.len()
        {
            return bad("embedding rows do not match vocabulary sizes".into());
        }
        if !self.splits.is_empty() {
            let mut ids: Vec<u64> = self
                .splits
                .train
                .iter()
                .chain(&self.splits.validation)
                .chain(&self.splits.test)
                .copied()
                .collect();
            ids.sort_unstable();
            let mut originals: Vec<u64> = self.originals().iter().map(|d| d.doc_id).collect();
            originals.sort_unstable();
            if ids != originals {
                return bad("splits do not partition the original documents".into());
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec(self)
            .map_err(|e| Error::InvalidArgument(format!("serialize bundle: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let bundle: CorpusBundle = serde_json::from_slice(&bytes)
            .map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        bundle.validate()?;
        Ok(bundle)
    }
}
