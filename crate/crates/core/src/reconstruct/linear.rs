//! Weighted-average reconstruction: ordinary least squares of the full score
//! on the subset's binary responses with no intercept, with a flagged ridge
//! fallback for singular designs.

use crate::data::{ResponseMatrix, ScoreVector};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Mat};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedAverageModel<S> {
    pub item_ids: Vec<String>,
    /// One weight per subset item; the prediction is the weighted sum of the
    /// binary responses (no intercept).
    pub weights: Vec<S>,
    /// True when the normal equations were singular and a ridge of 1e-8 was
    /// added to make them solvable.
    pub ridge_fallback: bool,
}

/// Least-squares weights of score on responses. The design matrix is the
/// binary response matrix itself; singular designs fall back to ridge
/// regression with λ = 1e-8 and are flagged.
pub fn fit_weighted_average<S: Scalar>(
    matrix: &ResponseMatrix,
    scores: &ScoreVector<S>,
) -> Result<WeightedAverageModel<S>> {
    if matrix.subject_ids() != scores.subject_ids() {
        return Err(Error::InvalidInput(
            "response matrix and scores have different subjects".into(),
        ));
    }
    let n = matrix.n_subjects();
    let d = matrix.n_items();
    let mut gram = Mat::<S>::zeros(d, d);
    let mut xty = vec![S::zero(); d];
    for j in 0..n {
        let row = matrix.row(j);
        let y = scores.values()[j];
        for a in 0..d {
            if row[a] == 0 {
                continue;
            }
            xty[a] += y;
            let gram_row = gram.row_mut(a);
            for (b, &x) in row.iter().enumerate() {
                if x == 1 {
                    gram_row[b] += S::one();
                }
            }
        }
    }
    let (weights, ridge_fallback) = match Cholesky::factor(&gram) {
        Ok(chol) => (chol.solve_vec(&xty), false),
        Err(_) => {
            let mut ridged = gram;
            for i in 0..d {
                ridged[(i, i)] += S::cast(RIDGE);
            }
            let chol = Cholesky::factor(&ridged).map_err(|e| {
                Error::Numerical(format!(
                    "weighted-average normal equations unsolvable even with ridge: {e}"
                ))
            })?;
            (chol.solve_vec(&xty), true)
        }
    };
    Ok(WeightedAverageModel {
        item_ids: matrix.item_ids().to_vec(),
        weights,
        ridge_fallback,
    })
}

impl<S: Scalar> WeightedAverageModel<S> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Predicts every subject of a matrix over the same items.
    pub fn predict(&self, matrix: &ResponseMatrix) -> Result<Vec<S>> {
        if matrix.item_ids() != &self.item_ids[..] {
            return Err(Error::InvalidInput(
                "matrix items do not match the fitted weights".into(),
            ));
        }
        Ok((0..matrix.n_subjects())
            .map(|j| {
                matrix
                    .row(j)
                    .iter()
                    .zip(&self.weights)
                    .filter(|(&x, _)| x == 1)
                    .map(|(_, &w)| w)
                    .sum()
            })
            .collect())
    }
}
