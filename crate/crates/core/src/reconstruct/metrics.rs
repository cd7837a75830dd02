//! Reconstruction error metrics: RMSE, MAE, and Spearman rank correlation
//! with average ranks on ties.

use crate::data::ScoreVector;
use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spearman<S> {
    Value(S),
    /// At least one side has zero rank variance, so the coefficient is
    /// undefined.
    Degenerate,
}

impl<S: Scalar> Spearman<S> {
    pub fn value(self) -> Option<S> {
        match self {
            Spearman::Value(v) => Some(v),
            Spearman::Degenerate => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics<S> {
    pub rmse: S,
    pub mae: S,
    pub spearman: Spearman<S>,
}

/// Average ranks (1-based); tied values share the mean of their positions.
fn average_ranks<S: Scalar>(values: &[S]) -> Vec<S> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite"));
    let mut ranks = vec![S::zero(); n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share rank mean of (i+1)..=(j+1)
        let shared = S::cast((i + j + 2) as f64 / 2.0);
        for &idx in &order[i..=j] {
            ranks[idx] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Standard RMSE/MAE plus Spearman correlation of aligned prediction and
/// truth vectors.
pub fn metrics<S: Scalar>(pred: &[S], truth: &[S]) -> Result<Metrics<S>> {
    if pred.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions vs {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::InvalidInput("metrics need at least 2 pairs".into()));
    }
    if pred.iter().chain(truth).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite metric input".into()));
    }
    let n = S::cast_usize(pred.len());
    let mut sq = S::zero();
    let mut ab = S::zero();
    for (&p, &t) in pred.iter().zip(truth) {
        let e = p - t;
        sq += e * e;
        ab += e.abs();
    }
    let spearman = match scalar::pearson(&average_ranks(pred), &average_ranks(truth)) {
        Some(r) => Spearman::Value(r),
        None => Spearman::Degenerate,
    };
    Ok(Metrics {
        rmse: (sq / n).sqrt(),
        mae: ab / n,
        spearman,
    })
}

/// Metrics on named score vectors; subject ids must match pairwise in order.
pub fn score_metrics<S: Scalar>(
    pred: &ScoreVector<S>,
    truth: &ScoreVector<S>,
) -> Result<Metrics<S>> {
    if pred.subject_ids() != truth.subject_ids() {
        return Err(Error::InvalidInput(
            "prediction and truth subject ids differ".into(),
        ));
    }
    metrics(pred.values(), truth.values())
}
