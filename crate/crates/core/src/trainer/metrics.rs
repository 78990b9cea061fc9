use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class_f1: Vec<f64>,
}

fn check(preds: &[usize], gold: &[usize], num_classes: usize) -> Result<()> {
    if preds.len() != gold.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} gold labels",
            preds.len(),
            gold.len()
        )));
    }
    if let Some(&bad) = preds.iter().chain(gold).find(|&&c| c >= num_classes) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            size: num_classes,
        });
    }
    Ok(())
}

/// F1 of every class; a zero precision or recall denominator gives 0.
pub fn per_class_f1(preds: &[usize], gold: &[usize], num_classes: usize) -> Result<Vec<f64>> {
    check(preds, gold, num_classes)?;
    let mut tp = vec![0usize; num_classes];
    let mut predicted = vec![0usize; num_classes];
    let mut actual = vec![0usize; num_classes];
    for (&p, &g) in preds.iter().zip(gold) {
        predicted[p] += 1;
        actual[g] += 1;
        if p == g {
            tp[p] += 1;
        }
    }
    Ok((0..num_classes)
        .map(|c| {
            if predicted[c] == 0 || actual[c] == 0 || tp[c] == 0 {
                return 0.0;
            }
            let p = tp[c] as f64 / predicted[c] as f64;
            let r = tp[c] as f64 / actual[c] as f64;
            2.0 * p * r / (p + r)
        })
        .collect())
}

/// Unweighted mean of [`per_class_f1`] over all `num_classes` classes.
pub fn macro_f1(preds: &[usize], gold: &[usize], num_classes: usize) -> Result<f64> {
    let f1 = per_class_f1(preds, gold, num_classes)?;
    Ok(f1.iter().sum::<f64>() / num_classes as f64)
}

pub fn compute_metrics(preds: &[usize], gold: &[usize], num_classes: usize) -> Result<Metrics> {
    if gold.is_empty() {
        return Err(Error::InvalidArgument("cannot score an empty split".into()));
    }
    let per_class_f1 = per_class_f1(preds, gold, num_classes)?;
    let correct = preds.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(Metrics {
        accuracy: correct as f64 / gold.len() as f64,
        macro_f1: per_class_f1.iter().sum::<f64>() / num_classes as f64,
        per_class_f1,
    })
}
