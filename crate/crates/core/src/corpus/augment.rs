use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::load::{oov_vector, read_vectors};
use super::{CorpusBundle, Document, View};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const DEFAULT_AUGMENT_RATE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentStrategy {
    /// Replace tokens with entries from a `{"word", "synonyms"}` table.
    Synonym,
    /// Drop tokens, always keeping at least one.
    Deletion,
    /// Replace tokens with per-position candidates from a
    /// `{"id", "position", "substitutes"}` table, e.g. the output of a masked
    /// language model run offline.
    ContextualTable,
}

impl AugmentStrategy {
    pub fn needs_table(self) -> bool {
        !matches!(self, AugmentStrategy::Deletion)
    }
}

impl std::str::FromStr for AugmentStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synonym" => Ok(Self::Synonym),
            "deletion" => Ok(Self::Deletion),
            "contextual_table" | "contextual" => Ok(Self::ContextualTable),
            other => Err(Error::InvalidArgument(format!(
                "unknown augmentation `{other}`"
            ))),
        }
    }
}

#[derive(Deserialize)]
struct SynonymLine {
    word: String,
    synonyms: Vec<String>,
}

#[derive(Deserialize)]
struct ContextLine {
    id: u64,
    position: usize,
    substitutes: Vec<String>,
}

enum Table {
    Synonyms(HashMap<String, Vec<String>>),
    Contextual(HashMap<(u64, usize), Vec<String>>),
    None,
}

impl Table {
    fn candidates(&self, doc: &Document, position: usize) -> &[String] {
        let found = match self {
            Table::Synonyms(t) => t.get(&doc.tokens[position]),
            Table::Contextual(t) => t.get(&(doc.doc_id, position)),
            Table::None => None,
        };
        found.map_or(&[], Vec::as_slice)
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::parse(path, n + 1, e.to_string()))?,
        );
    }
    Ok(out)
}

fn load_table(strategy: AugmentStrategy, aux_path: Option<&Path>) -> Result<Table> {
    if !strategy.needs_table() {
        return Ok(Table::None);
    }
    let path = aux_path.ok_or_else(|| {
        Error::InvalidArgument(format!("{strategy:?} augmentation requires a table file"))
    })?;
    Ok(match strategy {
        AugmentStrategy::Synonym => {
            let mut t: HashMap<String, Vec<String>> = HashMap::new();
            for l in read_jsonl::<SynonymLine>(path)? {
                t.entry(l.word).or_default().extend(l.synonyms);
            }
            Table::Synonyms(t)
        }
        AugmentStrategy::ContextualTable => {
            let mut t: HashMap<(u64, usize), Vec<String>> = HashMap::new();
            for l in read_jsonl::<ContextLine>(path)? {
                t.entry((l.id, l.position))
                    .or_default()
                    .extend(l.substitutes);
            }
            Table::Contextual(t)
        }
        AugmentStrategy::Deletion => unreachable!(),
    })
}

/// Adds one augmented view per original document.
///
/// All randomness comes from one ChaCha8 stream seeded with `seed`, consumed
/// document by document and token by token. For substitution strategies each
/// position draws a coin `u ~ U[0,1)` and substitutes when `u < rate` and
/// candidates exist, drawing the candidate index next. For deletion each
/// position draws a coin and is dropped when `u < rate`; if every position
/// was dropped one survivor index is drawn uniformly.
///
/// Substituted tokens keep their POS tag and every view keeps its source's
/// entity list. New words extend the word vocabulary with vectors from the
/// bundle's pretrained source file, or a seeded random vector if absent.
pub fn augment_corpus(
    bundle: &CorpusBundle,
    strategy: AugmentStrategy,
    aux_path: Option<&Path>,
    rate: f64,
    seed: u64,
) -> Result<CorpusBundle> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "augmentation rate {rate} outside (0, 1]"
        )));
    }
    if bundle.is_augmented() {
        return Err(Error::InvalidArgument("bundle is already augmented".into()));
    }
    let table = load_table(strategy, aux_path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first_id = bundle
        .documents
        .iter()
        .map(|d| d.doc_id)
        .max()
        .map_or(0, |m| m + 1);
    let mut out = bundle.clone();
    let mut new_words = Vec::new();

    for (doc_id, doc) in (first_id..).zip(bundle.originals()) {
        let (tokens, pos_tags) = match strategy {
            AugmentStrategy::Deletion => delete_tokens(doc, rate, &mut rng),
            _ => substitute_tokens(doc, &table, rate, &mut rng),
        };
        for t in &tokens {
            if out.word_vocab.intern(t).1 {
                new_words.push(t.clone());
            }
        }
        out.documents.push(Document {
            doc_id,
            tokens,
            pos_tags,
            entities: doc.entities.clone(),
            label: None,
            view: View::Augmented,
            source_id: doc.doc_id,
        });
    }

    if !new_words.is_empty() {
        out.word_embeddings = extend_embeddings(bundle, &new_words)?;
    }
    out.validate()?;
    Ok(out)
}

fn substitute_tokens(
    doc: &Document,
    table: &Table,
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<String>, Vec<String>) {
    let tokens = (0..doc.tokens.len())
        .map(|i| {
            let coin: f64 = rng.gen();
            let candidates = table.candidates(doc, i);
            if coin < rate && !candidates.is_empty() {
                candidates[rng.gen_range(0..candidates.len())].clone()
            } else {
                doc.tokens[i].clone()
            }
        })
        .collect();
    (tokens, doc.pos_tags.clone())
}

fn delete_tokens(doc: &Document, rate: f64, rng: &mut ChaCha8Rng) -> (Vec<String>, Vec<String>) {
    let mut keep: Vec<usize> = (0..doc.tokens.len())
        .filter(|_| rng.gen::<f64>() >= rate)
        .collect();
    if keep.is_empty() && !doc.tokens.is_empty() {
        keep.push(rng.gen_range(0..doc.tokens.len()));
    }
    (
        keep.iter().map(|&i| doc.tokens[i].clone()).collect(),
        keep.iter().map(|&i| doc.pos_tags[i].clone()).collect(),
    )
}

fn extend_embeddings(bundle: &CorpusBundle, new_words: &[String]) -> Result<Matrix> {
    let dim = bundle.word_embeddings.cols();
    let found = match &bundle.word_embedding_source {
        Some(path) => {
            let wanted = new_words
                .iter()
                .enumerate()
                .map(|(i, w)| (w.as_str(), i))
                .collect();
            let (file_dim, found) = read_vectors(path, &wanted)?;
            if file_dim != dim {
                return Err(Error::Shape(format!(
                    "{} has dimension {file_dim}, bundle has {dim}",
                    path.display()
                )));
            }
            found
        }
        None => HashMap::new(),
    };
    let old = &bundle.word_embeddings;
    let mut m = Matrix::zeros(old.rows() + new_words.len(), dim);
    m.as_mut_slice()[..old.len()].copy_from_slice(old.as_slice());
    for (i, w) in new_words.iter().enumerate() {
        let row = found.get(&i).cloned().unwrap_or_else(|| oov_vector(w, dim));
        m.row_mut(old.rows() + i).copy_from_slice(&row);
    }
    Ok(m)
}
