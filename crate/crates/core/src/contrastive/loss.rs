use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::pseudo::PseudoLabels;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Tape, Var};

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {tau}"
        )))
    }
}

/// Checks that `pairing` is an involution without fixed points over `rows`.
pub fn validate_pairing(pairing: &[usize], rows: usize) -> Result<()> {
    if pairing.len() != rows {
        return Err(Error::Shape(format!(
            "pairing covers {} of {rows} rows",
            pairing.len()
        )));
    }
    for (i, &j) in pairing.iter().enumerate() {
        if j >= rows {
            return Err(Error::IndexOutOfRange {
                index: j,
                size: rows,
            });
        }
        if j == i || pairing[j] != i {
            return Err(Error::InvalidArgument(format!(
                "row {i} is not in a two-view pair"
            )));
        }
    }
    Ok(())
}

/// Pairs row `i` with row `i + n` and back.
pub fn half_pairing(n: usize) -> Vec<usize> {
    (0..2 * n)
        .map(|i| if i < n { i + n } else { i - n })
        .collect()
}

fn off_diagonal(rows: usize) -> Arc<Vec<bool>> {
    Arc::new((0..rows * rows).map(|k| k / rows != k % rows).collect())
}

/// NT-Xent over all `2N` rows: each anchor's paired view is its only
/// positive and every other row is a negative. Returns the mean over anchors.
pub fn icl_loss(tape: &mut Tape, z_tilde: Var, pairing: &[usize], tau: f64) -> Result<Var> {
    let sim = tape.similarity(z_tilde, z_tilde)?;
    icl_from_similarity(tape, sim, pairing, tau)
}

/// [`icl_loss`] given the matrix of pairwise dot products directly.
pub fn icl_from_similarity(tape: &mut Tape, sim: Var, pairing: &[usize], tau: f64) -> Result<Var> {
    check_tau(tau)?;
    let rows = tape.value(sim).rows();
    validate_pairing(pairing, rows)?;
    let sim = tape.scale(sim, 1.0 / tau);
    let log_p = tape.masked_log_softmax(sim, off_diagonal(rows))?;
    let mut weights = Matrix::zeros(rows, rows);
    for (i, &j) in pairing.iter().enumerate() {
        weights.set(i, j, -1.0 / rows as f64);
    }
    tape.weighted_sum(log_p, Arc::new(weights))
}

/// Which rows enter the denominator of a cluster-level anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CclPool {
    /// The anchor's own view, `N - 1` rows.
    #[default]
    SameView,
    /// Every other row of both views.
    BothViews,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CclOptions {
    /// Divide each anchor's sum by its positive count.
    pub mean_positives: bool,
    pub pool: CclPool,
}

/// Cluster-level loss with swapped supervision.
///
/// `u_tilde` holds the `N` original rows followed by the `N` augmented rows.
/// An original anchor takes its positives from the augmented view's
/// components and vice versa; positives are always rows of the anchor's own
/// view, excluding itself. Anchors with no positive contribute nothing.
pub fn ccl_loss(
    tape: &mut Tape,
    u_tilde: Var,
    labels: &PseudoLabels,
    tau: f64,
    options: CclOptions,
) -> Result<Var> {
    check_tau(tau)?;
    let n = labels.n();
    let rows = tape.value(u_tilde).rows();
    if rows != 2 * n || labels.aug.len() != n {
        return Err(Error::Shape(format!(
            "{rows} rows for two views of {n} documents"
        )));
    }
    let view_of = |r: usize| r / n.max(1);
    let mask: Vec<bool> = (0..rows * rows)
        .map(|k| {
            let (i, j) = (k / rows, k % rows);
            i != j && (options.pool == CclPool::BothViews || view_of(i) == view_of(j))
        })
        .collect();

    let mut weights = Matrix::zeros(rows, rows);
    for (offset, supervision) in [(0, &labels.aug), (n, &labels.org)] {
        for i in 0..n {
            let positives: Vec<usize> = (0..n)
                .filter(|&j| j != i && supervision.same(i, j))
                .collect();
            if positives.is_empty() {
                continue;
            }
            let scale = if options.mean_positives {
                positives.len() as f64
            } else {
                1.0
            };
            for j in positives {
                weights.set(offset + i, offset + j, -1.0 / (n as f64 * scale));
            }
        }
    }

    let sim = tape.similarity(u_tilde, u_tilde)?;
    let sim = tape.scale(sim, 1.0 / tau);
    let log_p = tape.masked_log_softmax(sim, Arc::new(mask))?;
    tape.weighted_sum(log_p, Arc::new(weights))
}

/// [`icl_loss`] on a plain matrix.
pub fn icl_loss_value(z_tilde: &Matrix, pairing: &[usize], tau: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let z = tape.constant(z_tilde.clone());
    let l = icl_loss(&mut tape, z, pairing, tau)?;
    Ok(tape.value(l).get(0, 0))
}

/// [`ccl_loss`] on a plain matrix.
pub fn ccl_loss_value(
    u_tilde: &Matrix,
    labels: &PseudoLabels,
    tau: f64,
    options: CclOptions,
) -> Result<f64> {
    let mut tape = Tape::new();
    let u = tape.constant(u_tilde.clone());
    let l = ccl_loss(&mut tape, u, labels, tau, options)?;
    Ok(tape.value(l).get(0, 0))
}
