//! A small generated corpus with known labels, for smoke runs and tests.
//!
//! Every class owns a slice of the vocabulary and of the entity set. A
//! document mostly samples its own class's words, with some uniform noise,
//! and word and entity vectors sit around a per-class centroid.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub docs: usize,
    pub words_per_class: usize,
    pub embedding_dim: usize,
    pub pos_tags: usize,
    pub entities_per_class: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Probability that a token comes from the document's own class.
    pub class_affinity: f64,
    /// Standard deviation of vector noise around the class centroid.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 3,
            docs: 300,
            words_per_class: 20,
            embedding_dim: 8,
            pos_tags: 5,
            entities_per_class: 4,
            min_len: 6,
            max_len: 14,
            class_affinity: 0.75,
            noise: 0.5,
            seed: 7,
        }
    }
}

/// Paths of the files written by [`write_synthetic_corpus`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFiles {
    pub corpus: PathBuf,
    pub word_embeddings: PathBuf,
    pub entity_embeddings: PathBuf,
    pub synonyms: PathBuf,
}

fn word(c: usize, k: usize) -> String {
    format!("w{c}_{k}")
}

fn entity(c: usize, k: usize) -> String {
    format!("E{c}_{k}")
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_vectors(path: &Path, rows: impl Iterator<Item = (String, Vec<f64>)>) -> Result<()> {
    let mut w = create(path)?;
    for (term, v) in rows {
        let values: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        writeln!(w, "{term} {}", values.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `corpus.jsonl`, `words.txt`, `entities.txt` and `synonyms.jsonl`
/// into `dir`. Documents cycle through the classes so every class gets
/// `docs / classes` documents (the remainder goes to the lowest classes).
pub fn write_synthetic_corpus(dir: &Path, spec: &SyntheticSpec) -> Result<SyntheticFiles> {
    if spec.classes == 0 || spec.words_per_class < 2 || spec.pos_tags == 0 {
        return Err(Error::InvalidArgument(
            "synthetic corpus needs classes, at least 2 words per class and POS tags".into(),
        ));
    }
    if spec.min_len == 0 || spec.min_len > spec.max_len || spec.embedding_dim == 0 {
        return Err(Error::InvalidArgument(
            "bad synthetic document length or dimension".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.class_affinity) || spec.noise.is_nan() || spec.noise < 0.0 {
        return Err(Error::InvalidArgument(
            "bad synthetic affinity or noise".into(),
        ));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let centroids: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            (0..spec.embedding_dim)
                .map(|_| normal.sample(&mut rng))
                .collect()
        })
        .collect();
    let jitter = |c: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        centroids[c]
            .iter()
            .map(|&m| m + spec.noise * normal.sample(rng))
            .collect()
    };

    let files = SyntheticFiles {
        corpus: dir.join("corpus.jsonl"),
        word_embeddings: dir.join("words.txt"),
        entity_embeddings: dir.join("entities.txt"),
        synonyms: dir.join("synonyms.jsonl"),
    };

    let words: Vec<(String, Vec<f64>)> = (0..spec.classes)
        .flat_map(|c| (0..spec.words_per_class).map(move |k| (c, k)))
        .map(|(c, k)| (word(c, k), jitter(c, &mut rng)))
        .collect();
    write_vectors(&files.word_embeddings, words.into_iter())?;
    let entities: Vec<(String, Vec<f64>)> = (0..spec.classes)
        .flat_map(|c| (0..spec.entities_per_class).map(move |k| (c, k)))
        .map(|(c, k)| (entity(c, k), jitter(c, &mut rng)))
        .collect();
    write_vectors(&files.entity_embeddings, entities.into_iter())?;

    let tags: Vec<String> = ["NN", "VB", "JJ", "RB", "DT", "IN", "PR", "CD"]
        .iter()
        .map(|s| s.to_string())
        .chain((8..spec.pos_tags).map(|i| format!("T{i}")))
        .take(spec.pos_tags)
        .collect();
    let tag_of = |k: usize| tags[k % tags.len()].clone();

    let mut w = create(&files.corpus)?;
    for id in 0..spec.docs {
        let class = id % spec.classes;
        let len = rng.gen_range(spec.min_len..=spec.max_len);
        let mut tokens = Vec::with_capacity(len);
        let mut pos = Vec::with_capacity(len);
        for _ in 0..len {
            let c = if rng.gen_bool(spec.class_affinity) {
                class
            } else {
                rng.gen_range(0..spec.classes)
            };
            let k = rng.gen_range(0..spec.words_per_class);
            tokens.push(word(c, k));
            pos.push(tag_of(k));
        }
        let mut ents = Vec::new();
        if spec.entities_per_class > 0 {
            for _ in 0..rng.gen_range(0..=2) {
                ents.push(entity(class, rng.gen_range(0..spec.entities_per_class)));
            }
        }
        let line = json!({
            "id": id,
            "tokens": tokens,
            "pos": pos,
            "entities": ents,
            "label": class,
        });
        writeln!(w, "{line}").map_err(|e| Error::io(&files.corpus, e))?;
    }
    w.flush().map_err(|e| Error::io(&files.corpus, e))?;

    let mut w = create(&files.synonyms)?;
    for c in 0..spec.classes {
        for k in 0..spec.words_per_class {
            let mut others: Vec<usize> = (0..spec.words_per_class).filter(|&j| j != k).collect();
            others.shuffle(&mut rng);
            let synonyms: Vec<String> = others.iter().take(2).map(|&j| word(c, j)).collect();
            let line = json!({ "word": word(c, k), "synonyms": synonyms });
            writeln!(w, "{line}").map_err(|e| Error::io(&files.synonyms, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&files.synonyms, e))?;
    Ok(files)
}
