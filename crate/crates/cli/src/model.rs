//! Modeling steps shared by `reconstruct` and `pipeline`: item-restricted
//! models, additive-model fitting with split-wise metrics, and the
//! correlation plumbing behind the factor-analysis command.

use std::collections::HashMap;

use serde_json::{json, Value};
use sparsebench::data::SplitAssignment;
use sparsebench::irt::FittedIrtModel;
use sparsebench::linalg::Mat;
use sparsebench::reconstruct::{self, GamConfig, Metrics, ResidualStore};
use sparsebench::{Error, Gam, IrtModel, Result, Scores};

/// Clamps a requested subset size to the benchmark's item count, announcing
/// the adjustment on stdout so desk-scale runs of the 350-item default are
/// not surprising errors.
pub fn clamp_k(requested: usize, n_items: usize, what: &str) -> usize {
    if requested > n_items {
        println!("note: {what} has only {n_items} items; clamping --k {requested} to {n_items}");
        n_items
    } else {
        requested
    }
}

/// Copies the fitted parameters of `item_ids` (in that order) into a model
/// usable on a matrix holding exactly those items.
pub fn restrict_model(model: &IrtModel, item_ids: &[String]) -> Result<IrtModel> {
    let index: HashMap<&str, usize> = model
        .item_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut items = Vec::with_capacity(item_ids.len());
    for id in item_ids {
        let &pos = index
            .get(id.as_str())
            .ok_or_else(|| Error::InvalidInput(format!("item '{id}' is not in the fitted model")))?;
        items.push(model.items[pos]);
    }
    Ok(FittedIrtModel {
        kind: model.kind,
        item_ids: item_ids.to_vec(),
        items,
        grid: model.grid.clone(),
        log_likelihood_path: model.log_likelihood_path.clone(),
        em_cycles: model.em_cycles,
        converged: model.converged,
    })
}

/// Extracts the rows of `x` belonging to `wanted` subject ids, in that order.
pub fn rows_for_ids(x: &Mat<f64>, all_ids: &[String], wanted: &[String]) -> Result<Mat<f64>> {
    let index: HashMap<&str, usize> = all_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut rows = Vec::with_capacity(wanted.len());
    for id in wanted {
        let &pos = index
            .get(id.as_str())
            .ok_or_else(|| Error::InvalidInput(format!("unknown subject id: {id}")))?;
        rows.push(x.row(pos).to_vec());
    }
    Mat::from_rows(&rows)
}

/// Extracts the entries of `values` (aligned with `all_ids`) belonging to
/// `wanted` subject ids, in that order. Predictions live in plain vectors —
/// a regression can predict outside the validated 0–100 score range.
pub fn values_for_ids(
    all_ids: &[String],
    values: &[f64],
    wanted: &[String],
) -> Result<Vec<f64>> {
    let index: HashMap<&str, usize> = all_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    wanted
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .map(|&pos| values[pos])
                .ok_or_else(|| Error::InvalidInput(format!("unknown subject id: {id}")))
        })
        .collect()
}

/// One reconstruction: an additive model fitted on the training rows,
/// predictions for every subject, validation/test metrics, and the
/// validation residual store that feeds the prediction intervals.
pub struct FitEval {
    pub gam: Gam,
    /// One prediction per subject, in the target's subject order.
    pub predictions: Vec<f64>,
    pub val: Metrics<f64>,
    pub test: Metrics<f64>,
    pub store: ResidualStore<f64>,
}

pub fn fit_and_eval(
    x_all: &Mat<f64>,
    names: &[String],
    target: &Scores,
    split: &SplitAssignment,
) -> Result<FitEval> {
    let all_ids = target.subject_ids();
    let x_train = rows_for_ids(x_all, all_ids, &split.train_ids)?;
    let y_train = target.subset(&split.train_ids)?;
    let gam = reconstruct::fit_gam(&x_train, y_train.values(), names, &GamConfig::default())?;
    let predictions = gam.predict(x_all)?;
    let eval = |ids: &[String]| -> Result<Metrics<f64>> {
        reconstruct::metrics(
            &values_for_ids(all_ids, &predictions, ids)?,
            target.subset(ids)?.values(),
        )
    };
    let val = eval(&split.validation_ids)?;
    let test = eval(&split.test_ids)?;
    let store = ResidualStore::from_predictions_and_truth(
        &values_for_ids(all_ids, &predictions, &split.validation_ids)?,
        target.subset(&split.validation_ids)?.values(),
    )?;
    Ok(FitEval {
        gam,
        predictions,
        val,
        test,
        store,
    })
}

/// RMSE, MAE, and Spearman side by side; a degenerate Spearman (zero-variance
/// truth) serializes as null.
pub fn metrics_json(m: &Metrics<f64>) -> Value {
    json!({
        "rmse": m.rmse,
        "mae": m.mae,
        "spearman": m.spearman.value(),
    })
}

/// Maps every subject id to its split label.
pub fn split_labels(split: &SplitAssignment) -> HashMap<&str, &'static str> {
    let mut labels = HashMap::new();
    for id in &split.train_ids {
        labels.insert(id.as_str(), "train");
    }
    for id in &split.validation_ids {
        labels.insert(id.as_str(), "validation");
    }
    for id in &split.test_ids {
        labels.insert(id.as_str(), "test");
    }
    labels
}

/// Per-column means and population standard deviations of a row-major table.
pub fn column_stats(rows: &[Vec<f64>], n_cols: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut means = vec![0.0; n_cols];
    for row in rows {
        for (j, &v) in row.iter().enumerate() {
            means[j] += v;
        }
    }
    for m in &mut means {
        *m /= n;
    }
    let mut sds = vec![0.0; n_cols];
    for row in rows {
        for (j, &v) in row.iter().enumerate() {
            let d = v - means[j];
            sds[j] += d * d;
        }
    }
    for s in &mut sds {
        *s = (*s / n).sqrt();
    }
    (means, sds)
}

/// Pearson correlation matrix of the table's columns; constant columns are
/// rejected by name because their correlations are undefined.
pub fn correlation_matrix(
    rows: &[Vec<f64>],
    columns: &[String],
) -> Result<(Mat<f64>, Vec<f64>, Vec<f64>)> {
    let d = columns.len();
    let (means, sds) = column_stats(rows, d);
    if let Some(j) = sds.iter().position(|&s| s <= 0.0) {
        return Err(Error::InvalidInput(format!(
            "column '{}' is constant; its correlations are undefined",
            columns[j]
        )));
    }
    let n = rows.len() as f64;
    let mut corr = Mat::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let mut acc = 0.0;
            for row in rows {
                acc += (row[a] - means[a]) * (row[b] - means[b]);
            }
            let r = if a == b {
                1.0
            } else {
                acc / (n * sds[a] * sds[b])
            };
            corr.row_mut(a)[b] = r;
            corr.row_mut(b)[a] = r;
        }
    }
    Ok((corr, means, sds))
}

/// Validation/test RMSE of the subscore-only reconstruction of `target` from
/// the given items — the same route `subsample` scores random subsets with,
/// so selections and random draws compare on equal footing.
pub fn subscore_route_rmse(
    matrix: &sparsebench::data::ResponseMatrix,
    target: &Scores,
    split: &SplitAssignment,
    item_ids: &[String],
) -> Result<(f64, f64)> {
    let subset = matrix.subset_items_by_id(item_ids)?;
    let sub_scores: Scores = subset.percent_scores();
    let x_train = Mat::from_columns(&[sub_scores.subset(&split.train_ids)?.values().to_vec()])?;
    let y_train = target.subset(&split.train_ids)?;
    let gam = reconstruct::fit_gam(
        &x_train,
        y_train.values(),
        &["subscore".into()],
        &GamConfig::default(),
    )?;
    let eval = |ids: &[String]| -> Result<f64> {
        let x = Mat::from_columns(&[sub_scores.subset(ids)?.values().to_vec()])?;
        let pred = gam.predict(&x)?;
        Ok(reconstruct::metrics(&pred, target.subset(ids)?.values())?.rmse)
    };
    Ok((eval(&split.validation_ids)?, eval(&split.test_ids)?))
}

