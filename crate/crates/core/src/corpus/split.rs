use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CorpusBundle, Splits};
use crate::error::{Error, Result};

/// Samples `per_class_labeled` original documents of every class without
/// replacement; the first ⌈k/2⌉ of each sample go to train, the rest to
/// validation, and every other original (labeled or not) to test.
pub fn split_corpus(
    bundle: &CorpusBundle,
    per_class_labeled: usize,
    seed: u64,
) -> Result<CorpusBundle> {
    if per_class_labeled == 0 {
        return Err(Error::InvalidArgument(
            "per_class_labeled must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits = Splits::default();
    let mut taken = std::collections::HashSet::new();
    for class in 0..bundle.num_classes {
        let mut members: Vec<u64> = bundle
            .originals()
            .iter()
            .filter(|d| d.label == Some(class))
            .map(|d| d.doc_id)
            .collect();
        if members.len() < per_class_labeled {
            return Err(Error::ClassTooSmall {
                class,
                available: members.len(),
                required: per_class_labeled,
            });
        }
        members.shuffle(&mut rng);
        let to_train = per_class_labeled.div_ceil(2);
        splits.train.extend(&members[..to_train]);
        splits
            .validation
            .extend(&members[to_train..per_class_labeled]);
        taken.extend(members[..per_class_labeled].iter().copied());
    }
    splits.test = bundle
        .originals()
        .iter()
        .map(|d| d.doc_id)
        .filter(|id| !taken.contains(id))
        .collect();
    splits.train.sort_unstable();
    splits.validation.sort_unstable();
    splits.test.sort_unstable();

    let mut out = bundle.clone();
    out.splits = splits;
    Ok(out)
}
