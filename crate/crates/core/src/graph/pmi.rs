use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::CsrMatrix;

pub const DEFAULT_WINDOW: usize = 5;

/// Positive PMI over sliding windows.
///
/// A window of width `window` slides one step at a time over each sequence;
/// a sequence no longer than the window contributes exactly one window
/// (itself) and an empty sequence none. With `W` windows, `c(v)` windows
/// containing `v`, and `c(u,v)` windows containing both,
/// `A[u,v] = max(ln(c(u,v)·W / (c(u)·c(v))), 0)`. Pairs that never
/// co-occur get no entry and the diagonal is always zero.
pub fn compute_pmi_adjacency(
    sequences: &[Vec<usize>],
    vocab_size: usize,
    window: usize,
) -> Result<CsrMatrix> {
    if window < 2 {
        return Err(Error::InvalidArgument(format!("PMI window {window} < 2")));
    }
    if sequences.is_empty() {
        return Err(Error::InvalidArgument(
            "PMI needs at least one sequence".into(),
        ));
    }
    if let Some(&bad) = sequences.iter().flatten().find(|&&v| v >= vocab_size) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            size: vocab_size,
        });
    }

    let mut windows = 0u64;
    let mut single = vec![0u64; vocab_size];
    let mut pairs: HashMap<(usize, usize), u64> = HashMap::new();
    let mut distinct = Vec::with_capacity(window);
    for seq in sequences.iter().filter(|s| !s.is_empty()) {
        let starts = seq.len().saturating_sub(window) + 1;
        for s in 0..starts {
            distinct.clear();
            distinct.extend_from_slice(&seq[s..(s + window).min(seq.len())]);
            distinct.sort_unstable();
            distinct.dedup();
            windows += 1;
            for (a, &u) in distinct.iter().enumerate() {
                single[u] += 1;
                for &v in &distinct[a + 1..] {
                    *pairs.entry((u, v)).or_insert(0) += 1;
                }
            }
        }
    }

    let total = windows as f64;
    let mut triplets = Vec::with_capacity(pairs.len() * 2);
    for (&(u, v), &joint) in &pairs {
        let pmi = (joint as f64 * total / (single[u] as f64 * single[v] as f64)).ln();
        if pmi > 0.0 {
            triplets.push((u, v, pmi));
            triplets.push((v, u, pmi));
        }
    }
    CsrMatrix::from_triplets(vocab_size, vocab_size, triplets)
}
