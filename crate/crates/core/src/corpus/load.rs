use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{CorpusBundle, Document, Splits, View, Vocab};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Half-width of the uniform range used for words missing from a vector file.
pub const OOV_SCALE: f64 = 0.01;

#[derive(Debug, Deserialize)]
struct RawDocument {
    id: u64,
    tokens: Vec<String>,
    pos: Vec<String>,
    #[serde(default)]
    entities: Vec<String>,
    #[serde(default)]
    label: Option<usize>,
}

/// A document dropped during loading, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub line: usize,
    pub doc_id: u64,
    pub reason: String,
}

#[derive(Debug)]
pub struct Loaded {
    pub bundle: CorpusBundle,
    pub rejected: Vec<Rejection>,
}

/// Reads a JSONL corpus plus word and entity vector files.
///
/// Corpus lines are `{"id", "tokens", "pos", "entities", "label"}` objects.
/// Documents whose POS sequence length differs from their token count are
/// skipped and reported in [`Loaded::rejected`]; a duplicate id or an empty
/// result is fatal.
pub fn load_corpus(
    corpus_path: &Path,
    word_emb_path: &Path,
    entity_emb_path: &Path,
) -> Result<Loaded> {
    let file = std::fs::File::open(corpus_path).map_err(|e| Error::io(corpus_path, e))?;
    let mut documents = Vec::new();
    let mut rejected = Vec::new();
    let mut ids = HashSet::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(corpus_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawDocument = serde_json::from_str(&line)
            .map_err(|e| Error::parse(corpus_path, n + 1, e.to_string()))?;
        if !ids.insert(raw.id) {
            return Err(Error::DuplicateDocId(raw.id));
        }
        if raw.tokens.len() != raw.pos.len() {
            rejected.push(Rejection {
                line: n + 1,
                doc_id: raw.id,
                reason: format!("{} tokens but {} POS tags", raw.tokens.len(), raw.pos.len()),
            });
            continue;
        }
        documents.push(Document {
            doc_id: raw.id,
            tokens: raw.tokens,
            pos_tags: raw.pos,
            entities: raw.entities,
            label: raw.label,
            view: View::Original,
            source_id: raw.id,
        });
    }
    if documents.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let mut word_vocab = Vocab::default();
    let mut pos_vocab = Vocab::default();
    let mut entity_vocab = Vocab::default();
    for d in &documents {
        for t in &d.tokens {
            word_vocab.intern(t);
        }
        for t in &d.pos_tags {
            pos_vocab.intern(t);
        }
        for t in &d.entities {
            entity_vocab.intern(t);
        }
    }
    let num_classes = documents
        .iter()
        .filter_map(|d| d.label)
        .max()
        .map_or(0, |m| m + 1);

    let word_embeddings = embedding_matrix(word_emb_path, word_vocab.terms())?;
    let entity_embeddings = embedding_matrix(entity_emb_path, entity_vocab.terms())?;

    let bundle = CorpusBundle {
        documents,
        word_vocab,
        pos_vocab,
        entity_vocab,
        word_embeddings,
        entity_embeddings,
        splits: Splits::default(),
        num_classes,
        word_embedding_source: Some(absolute(word_emb_path)),
    };
    bundle.validate()?;
    Ok(Loaded { bundle, rejected })
}

fn absolute(p: &Path) -> PathBuf {
    std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Deterministic small random vector for a term absent from a vector file,
/// seeded by a hash of the term itself.
pub fn oov_vector(term: &str, dim: usize) -> Vec<f64> {
    let digest = Sha256::digest(term.as_bytes());
    let seed = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim)
        .map(|_| rng.gen_range(-OOV_SCALE..=OOV_SCALE))
        .collect()
}

/// Builds the embedding rows for `terms` from a `token v1 … vD` file.
pub(crate) fn embedding_matrix(path: &Path, terms: &[String]) -> Result<Matrix> {
    let wanted: HashMap<&str, usize> = terms
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    let (dim, found) = read_vectors(path, &wanted)?;
    if dim == 0 && !terms.is_empty() {
        return Err(Error::parse(path, 1, "vector file is empty"));
    }
    let mut m = Matrix::zeros(terms.len(), dim);
    for (i, t) in terms.iter().enumerate() {
        match found.get(&i) {
            Some(v) => m.row_mut(i).copy_from_slice(v),
            None => m.row_mut(i).copy_from_slice(&oov_vector(t, dim)),
        }
    }
    Ok(m)
}

/// Streams a vector file, keeping only the rows named in `wanted`. Returns
/// the dimension (0 for an empty file) and the rows found, keyed by the
/// caller's index.
pub(crate) fn read_vectors(
    path: &Path,
    wanted: &HashMap<&str, usize>,
) -> Result<(usize, HashMap<usize, Vec<f64>>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dim = None;
    let mut found = HashMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values: Vec<&str> = parts.collect();
        let d = *dim.get_or_insert(values.len());
        if values.len() != d || d == 0 {
            return Err(Error::parse(
                path,
                n + 1,
                format!(
                    "expected {d} values after `{token}`, found {}",
                    values.len()
                ),
            ));
        }
        if let Some(&i) = wanted.get(token) {
            let v = values
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(path, n + 1, e.to_string()))?;
            found.entry(i).or_insert(v);
        }
    }
    Ok((dim.unwrap_or(0), found))
}
