use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Above this many coordinates only a seeded random subset is probed.
pub const FULL_CHECK_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub coordinates_checked: usize,
}

/// Compares the gradients returned by `loss_fn` at `params` against central
/// finite differences with step `eps`.
///
/// `loss_fn` returns the loss and one gradient per parameter tensor. The
/// error for a coordinate is `|g_ad − g_fd| / max(1, |g_ad|, |g_fd|)`.
pub fn grad_check<F>(loss_fn: F, params: &[Matrix], eps: f64, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&[Matrix]) -> Result<(f64, Vec<Matrix>)>,
{
    if !(1e-6..=1e-4).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step {eps} outside [1e-6, 1e-4]"
        )));
    }
    let (_, analytic) = loss_fn(params)?;
    if analytic.len() != params.len()
        || analytic
            .iter()
            .zip(params)
            .any(|(g, p)| g.shape() != p.shape())
    {
        return Err(Error::Shape(
            "gradients do not match parameter shapes".into(),
        ));
    }

    let mut coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(p, m)| (0..m.len()).map(move |k| (p, k)))
        .collect();
    if coords.len() > FULL_CHECK_LIMIT {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked: Vec<usize> = sample(&mut rng, coords.len(), FULL_CHECK_LIMIT).into_vec();
        picked.sort_unstable();
        coords = picked.into_iter().map(|i| coords[i]).collect();
    }

    let mut work = params.to_vec();
    let mut worst = 0.0_f64;
    for &(p, k) in &coords {
        let orig = work[p].as_slice()[k];
        let mut probe = |x: f64| -> Result<f64> {
            work[p].as_mut_slice()[k] = x;
            let (l, _) = loss_fn(&work)?;
            if !l.is_finite() {
                return Err(Error::NonFiniteProbe {
                    param: p,
                    coordinate: k,
                });
            }
            Ok(l)
        };
        let plus = probe(orig + eps)?;
        let minus = probe(orig - eps)?;
        work[p].as_mut_slice()[k] = orig;
        let g_fd = (plus - minus) / (2.0 * eps);
        let g_ad = analytic[p].as_slice()[k];
        let err = (g_ad - g_fd).abs() / 1.0_f64.max(g_ad.abs()).max(g_fd.abs());
        worst = worst.max(err);
    }
    Ok(GradCheckReport {
        max_relative_error: worst,
        coordinates_checked: coords.len(),
    })
}
