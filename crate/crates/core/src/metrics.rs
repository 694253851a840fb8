//! Fractional error: per-sample `‖pred − target‖₂ / ‖target‖₂`, averaged.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalError {
    pub fe: f64,
    /// `None` where the target has zero norm.
    pub per_sample: Vec<Option<f64>>,
    pub excluded: usize,
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    math::sqrt(v.map(|x| x * x).sum())
}

pub fn fractional_error(preds: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<FractionalError> {
    if preds.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let mut per_sample = Vec::with_capacity(preds.len());
    for (k, (p, t)) in preds.iter().zip(targets).enumerate() {
        if p.len() != t.len() {
            return Err(Error::Shape(format!("sample {k}: prediction and target lengths differ")));
        }
        let tn = norm(t.iter().copied());
        per_sample.push((tn > 0.0).then(|| norm(p.iter().zip(t).map(|(a, b)| a - b)) / tn));
    }
    mean_of(per_sample)
}

/// Rebuilds the summary from stored per-sample errors.
pub fn mean_of(per_sample: Vec<Option<f64>>) -> Result<FractionalError> {
    let used: Vec<f64> = per_sample.iter().flatten().copied().collect();
    if used.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(FractionalError {
        fe: used.iter().sum::<f64>() / used.len() as f64,
        excluded: per_sample.len() - used.len(),
        per_sample,
    })
}
