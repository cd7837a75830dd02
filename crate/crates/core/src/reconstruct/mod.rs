//! Score reconstruction: penalized-spline additive regression, marginal and
//! joint predictor assemblies, the weighted-average linear model, the
//! logistic score-link baseline, error metrics, and nonparametric prediction
//! intervals.

mod baseline;
mod basis;
mod gam;
mod interval;
mod linear;
mod metrics;

pub use baseline::{
    baseline_scores, fit_logistic_baseline, score_grid, score_log_posterior, score_map_baseline,
    BaselineItem, LogisticBaseline, SCORE_GRID_SIZE,
};
pub use gam::{fit_gam, GamConfig, GamFit, SplineSmooth};
pub use interval::{
    interval_for_point, predict_with_interval, IntervalConfig, PredictionInterval, ResidualStore,
};
pub use linear::{fit_weighted_average, WeightedAverageModel};
pub use metrics::{metrics, score_metrics, Metrics, Spearman};

use crate::data::{check_unique, ScoreVector};
use crate::error::{Error, Result};
use crate::irt::AbilityEstimates;
use crate::linalg::Mat;
use crate::scalar::Scalar;

/// Predictor matrix for one benchmark's own reconstruction: a column of
/// ability estimates next to a column of subset percent scores, subjects in
/// the input order.
pub fn assemble_marginal<S: Scalar>(
    theta: &AbilityEstimates<S>,
    subscore: &ScoreVector<S>,
) -> Result<Mat<S>> {
    if theta.subject_ids != subscore.subject_ids() {
        return Err(Error::InvalidInput(
            "ability estimates and subscores have different subjects".into(),
        ));
    }
    check_unique(&theta.subject_ids, "subject")?;
    if theta.values.is_empty() {
        return Err(Error::InvalidInput("no subjects to assemble".into()));
    }
    Mat::from_columns(&[theta.values.clone(), subscore.values().to_vec()])
}

/// Predictor names matching [`assemble_marginal`] columns.
pub fn marginal_predictor_names() -> Vec<String> {
    vec!["ability".into(), "subscore".into()]
}

fn per_subject_mean<S: Scalar>(columns: &[&[S]], n: usize) -> Vec<S> {
    let b = S::cast_usize(columns.len());
    (0..n)
        .map(|j| {
            let sum: S = columns.iter().map(|col| col[j]).sum();
            sum / b
        })
        .collect()
}

/// Predictor matrix for the joint (all-benchmark) reconstruction.
///
/// Columns, in order: one ability column per benchmark, the target
/// benchmark's subset score, the mean subset score over benchmarks, the
/// target benchmark's weighted-average prediction, and the mean
/// weighted-average prediction — B+4 columns. For grand-mean targets pass
/// `specific = None`: the two target-specific columns are dropped, leaving
/// B+2.
///
/// `specific` is the pair (target subset score, target weighted-average
/// prediction). Every input must carry the same subjects in the same order.
/// Weighted-average predictions are plain per-subject vectors aligned with
/// the ability estimates: an unconstrained regression can predict outside
/// [0, 100], so its outputs do not fit the validated score type.
pub fn assemble_joint<S: Scalar>(
    all_thetas: &[AbilityEstimates<S>],
    specific: Option<(&ScoreVector<S>, &[S])>,
    all_subscores: &[ScoreVector<S>],
    all_wa_preds: &[Vec<S>],
) -> Result<Mat<S>> {
    if all_thetas.is_empty() {
        return Err(Error::InvalidInput("no benchmarks to assemble".into()));
    }
    if all_subscores.len() != all_thetas.len() || all_wa_preds.len() != all_thetas.len() {
        return Err(Error::InvalidInput(format!(
            "{} ability sets, {} subscore sets, {} weighted-average sets",
            all_thetas.len(),
            all_subscores.len(),
            all_wa_preds.len()
        )));
    }
    let ids = &all_thetas[0].subject_ids;
    check_unique(ids, "subject")?;
    if ids.is_empty() {
        return Err(Error::InvalidInput("no subjects to assemble".into()));
    }
    for (b, theta) in all_thetas.iter().enumerate() {
        if &theta.subject_ids != ids {
            return Err(Error::InvalidInput(format!(
                "ability estimates for benchmark {b} have different subjects"
            )));
        }
    }
    for (b, v) in all_subscores.iter().enumerate() {
        if v.subject_ids() != ids.as_slice() {
            return Err(Error::InvalidInput(format!(
                "subscores for benchmark {b} have different subjects"
            )));
        }
    }
    for (b, v) in all_wa_preds.iter().enumerate() {
        if v.len() != ids.len() {
            return Err(Error::InvalidInput(format!(
                "predictions for benchmark {b} cover {} subjects, expected {}",
                v.len(),
                ids.len()
            )));
        }
    }
    if let Some((sub, wa)) = specific {
        if sub.subject_ids() != ids.as_slice() {
            return Err(Error::InvalidInput(
                "target-specific columns have different subjects".into(),
            ));
        }
        if wa.len() != ids.len() {
            return Err(Error::InvalidInput(format!(
                "target-specific predictions cover {} subjects, expected {}",
                wa.len(),
                ids.len()
            )));
        }
    }

    let n = ids.len();
    let sub_cols: Vec<&[S]> = all_subscores.iter().map(|v| v.values()).collect();
    let wa_cols: Vec<&[S]> = all_wa_preds.iter().map(|v| v.as_slice()).collect();
    let mut columns: Vec<Vec<S>> = all_thetas.iter().map(|t| t.values.clone()).collect();
    if let Some((sub, _)) = specific {
        columns.push(sub.values().to_vec());
    }
    columns.push(per_subject_mean(&sub_cols, n));
    if let Some((_, wa)) = specific {
        columns.push(wa.to_vec());
    }
    columns.push(per_subject_mean(&wa_cols, n));
    Mat::from_columns(&columns)
}

/// Predictor names matching [`assemble_joint`] columns. `specific` is the
/// target benchmark's name, or `None` for a grand-mean assembly.
pub fn joint_predictor_names(benchmark_names: &[String], specific: Option<&str>) -> Vec<String> {
    let mut names: Vec<String> = benchmark_names
        .iter()
        .map(|b| format!("ability-{b}"))
        .collect();
    if let Some(b) = specific {
        names.push(format!("subscore-{b}"));
    }
    names.push("subscore-mean".into());
    if let Some(b) = specific {
        names.push(format!("wa-{b}"));
    }
    names.push("wa-mean".into());
    names
}
