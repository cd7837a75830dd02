//! Item-subset selection: Fisher-information quantile filtering, random
//! cross-validated subsampling, hyperparameter tuning of the RMSE + λk
//! objective, and a k-means clustering baseline.

use crate::data::{ResponseMatrix, ScoreVector, SplitAssignment};
use crate::error::{Error, Result};
use crate::irt::{
    self, AbilityEstimates, AbilityEstimator, EmConfig, FittedIrtModel, ItemParameters, ModelKind,
};
use crate::linalg::Mat;
use crate::quad::QuadratureGrid;
use crate::reconstruct::{self, GamConfig};
use crate::scalar::{self, Scalar};
use crate::seeding::stream_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Expected Fisher information of one item at ability θ:
/// (p′)² / (p·(1−p)) with p′ = a(u−c)σ(z)σ(−z). For the 2PL this reduces to
/// a²·p·(1−p). Returns 0 when p is degenerate.
pub fn fisher_information<S: Scalar>(theta: S, item: &ItemParameters<S>) -> S {
    let p = irt::link_probability(theta, item);
    let q = irt::link_complement(theta, item);
    if p <= S::zero() || q <= S::zero() {
        return S::zero();
    }
    let dp = irt::link_theta_derivative(theta, item);
    dp * dp / (p * q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubsetProvenance {
    Random,
    InfoFilter,
    Cluster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetResult<S> {
    pub item_ids: Vec<String>,
    pub k: usize,
    pub val_rmse: Option<S>,
    pub test_rmse: Option<S>,
    pub provenance: SubsetProvenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig<S> {
    /// Number of equal-frequency ability chunks (one selection round each).
    pub quantiles: usize,
    /// Minimum information a chunk's best item must exceed to be selected.
    pub info_threshold: S,
    pub model_kind: ModelKind,
    pub estimator: AbilityEstimator,
}

impl<S: Scalar> FilterConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if self.quantiles < 1 {
            return Err(Error::InvalidInput("quantiles must be ≥ 1".into()));
        }
        if !(self.info_threshold >= S::zero() && self.info_threshold.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "info_threshold must be a finite nonnegative number, got {}",
                self.info_threshold
            )));
        }
        if self.estimator == AbilityEstimator::Eap {
            return Err(Error::InvalidInput(
                "filter abilities must use the map or eapsum estimator".into(),
            ));
        }
        Ok(())
    }
}

/// Medians of the q equal-frequency chunks of `values` (empty chunks are
/// skipped, so at most min(q, n) points are returned).
fn ability_eval_points<S: Scalar>(values: &[S], q: usize) -> Vec<S> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite abilities"));
    let n = sorted.len();
    (0..q)
        .filter_map(|c| {
            let lo = c * n / q;
            let hi = (c + 1) * n / q;
            if lo >= hi {
                None
            } else {
                Some(scalar::median(&sorted[lo..hi]))
            }
        })
        .collect()
}

/// Selects at most one item per ability chunk: at each chunk median, the
/// not-yet-selected item with maximal Fisher information is chosen if that
/// maximum exceeds the threshold, then removed from the search space. Ties
/// resolve to the lowest item index.
pub fn information_filter<S: Scalar>(
    model: &FittedIrtModel<S>,
    abilities: &AbilityEstimates<S>,
    cfg: &FilterConfig<S>,
) -> Result<SubsetResult<S>> {
    cfg.validate()?;
    if model.items.is_empty() {
        return Err(Error::InvalidInput("empty item bank".into()));
    }
    if abilities.values.is_empty() {
        return Err(Error::InvalidInput("empty ability sample".into()));
    }
    if abilities.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite ability estimate".into()));
    }
    let eval_points = ability_eval_points(&abilities.values, cfg.quantiles);
    let mut available = vec![true; model.items.len()];
    let mut selected = Vec::new();
    for &theta in &eval_points {
        let mut best: Option<(usize, S)> = None;
        for (i, item) in model.items.iter().enumerate() {
            if !available[i] {
                continue;
            }
            let info = fisher_information(theta, item);
            if best.map_or(true, |(_, b)| info > b) {
                best = Some((i, info));
            }
        }
        if let Some((i, info)) = best {
            if info > cfg.info_threshold {
                available[i] = false;
                selected.push(i);
            }
        }
    }
    Ok(SubsetResult {
        item_ids: selected
            .iter()
            .map(|&i| model.item_ids[i].clone())
            .collect(),
        k: selected.len(),
        val_rmse: None,
        test_rmse: None,
        provenance: SubsetProvenance::InfoFilter,
    })
}

/// Fits the subscore-only reconstruction (one smooth of the subset percent
/// score) on the training split and returns (validation RMSE, test RMSE).
fn subscore_rmse<S: Scalar>(
    subset: &ResponseMatrix,
    scores: &ScoreVector<S>,
    split: &SplitAssignment,
    gam_cfg: &GamConfig,
) -> Result<(S, S)> {
    let sub_scores = subset.percent_scores::<S>();
    let s_train = sub_scores.subset(&split.train_ids)?;
    let y_train = scores.subset(&split.train_ids)?;
    let x_train = Mat::from_columns(&[s_train.values().to_vec()])?;
    let gam = reconstruct::fit_gam(&x_train, y_train.values(), &["subscore".into()], gam_cfg)?;
    let eval = |ids: &[String]| -> Result<S> {
        let s = sub_scores.subset(ids)?;
        let y = scores.subset(ids)?;
        let pred = gam.predict(&Mat::from_columns(&[s.values().to_vec()])?)?;
        Ok(reconstruct::metrics(&pred, y.values())?.rmse)
    };
    Ok((eval(&split.validation_ids)?, eval(&split.test_ids)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord<S> {
    pub rep: usize,
    pub val_rmse: S,
    pub test_rmse: S,
}

/// Draws `reps` uniform k-item subsets, reconstructs the full score from each
/// subset's percent score, and returns the subset with the smallest
/// validation RMSE together with the full RMSE distribution.
pub fn random_subsample_sweep<S: Scalar>(
    matrix: &ResponseMatrix,
    scores: &ScoreVector<S>,
    split: &SplitAssignment,
    k: usize,
    reps: usize,
    seed: u64,
) -> Result<(SubsetResult<S>, Vec<SweepRecord<S>>)> {
    let d = matrix.n_items();
    if k == 0 || k > d {
        return Err(Error::InvalidInput(format!(
            "subset size k={k} must lie in 1..={d}"
        )));
    }
    if reps == 0 {
        return Err(Error::InvalidInput("reps must be ≥ 1".into()));
    }
    split.validate_against(matrix.subject_ids())?;
    let gam_cfg = GamConfig::default();
    let mut records = Vec::with_capacity(reps);
    let mut best: Option<SubsetResult<S>> = None;
    for rep in 0..reps {
        let mut rng = stream_rng(seed, "sweep-rep", rep as u64);
        let mut idx = rand::seq::index::sample(&mut rng, d, k).into_vec();
        idx.sort_unstable();
        let subset = matrix.subset_items(&idx)?;
        let (val_rmse, test_rmse) = subscore_rmse(&subset, scores, split, &gam_cfg)?;
        records.push(SweepRecord {
            rep,
            val_rmse,
            test_rmse,
        });
        if best.as_ref().map_or(true, |b| {
            val_rmse < b.val_rmse.expect("sweep results carry val rmse")
        }) {
            best = Some(SubsetResult {
                item_ids: idx.iter().map(|&i| matrix.item_ids()[i].clone()).collect(),
                k,
                val_rmse: Some(val_rmse),
                test_rmse: Some(test_rmse),
                provenance: SubsetProvenance::Random,
            });
        }
    }
    Ok((best.expect("reps ≥ 1"), records))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig<S> {
    /// Weight of the subset size in the objective RMSE + λ·k.
    pub lambda: S,
    /// Number of random candidate configurations to evaluate.
    pub budget: usize,
    pub seed: u64,
}

impl<S: Scalar> Default for TuneConfig<S> {
    fn default() -> Self {
        TuneConfig {
            lambda: S::cast(0.005),
            budget: 64,
            seed: 0,
        }
    }
}

impl<S: Scalar> TuneConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= S::zero() && self.lambda.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "lambda must be finite and ≥ 0, got {}",
                self.lambda
            )));
        }
        if self.budget < 1 {
            return Err(Error::InvalidInput("budget must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Candidate space for `tune_selection`: model kind × estimator × chunk
/// count, with the information threshold drawn from [0, max observed item
/// information] per candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSearchSpace {
    pub model_kinds: Vec<ModelKind>,
    pub estimators: Vec<AbilityEstimator>,
    pub quantile_counts: Vec<usize>,
}

impl FilterSearchSpace {
    /// Full model/estimator cross product with the chunk count fixed at the
    /// target subset size.
    pub fn for_target(target_k: usize) -> Self {
        FilterSearchSpace {
            model_kinds: vec![ModelKind::TwoPl, ModelKind::ThreePl, ModelKind::FourPl],
            estimators: vec![AbilityEstimator::Map, AbilityEstimator::EapSum],
            quantile_counts: vec![target_k],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_kinds.is_empty()
            || self.estimators.is_empty()
            || self.quantile_counts.is_empty()
        {
            return Err(Error::InvalidInput("empty tuning search space".into()));
        }
        if self.estimators.contains(&AbilityEstimator::Eap) {
            return Err(Error::InvalidInput(
                "filter abilities must use the map or eapsum estimator".into(),
            ));
        }
        if self.quantile_counts.iter().any(|&q| q < 1) {
            return Err(Error::InvalidInput("quantile counts must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Refits the subset model on the training split and reconstructs the full
/// score from [ability, subscore]; returns (validation RMSE, test RMSE).
fn refit_subset_rmse<S: Scalar>(
    matrix: &ResponseMatrix,
    scores: &ScoreVector<S>,
    split: &SplitAssignment,
    item_ids: &[String],
    kind: ModelKind,
    estimator: AbilityEstimator,
    grid: &QuadratureGrid<S>,
) -> Result<(S, S)> {
    let sub_all = matrix.subset_items_by_id(item_ids)?;
    let sub_train = sub_all.subset_subjects_by_id(&split.train_ids)?;
    let model = irt::fit_em(&sub_train, kind, grid, &EmConfig::default())?;
    let sub_scores = sub_all.percent_scores::<S>();
    let ab_train = irt::estimate_abilities(&sub_train, &model, estimator)?;
    let s_train = sub_scores.subset(&split.train_ids)?;
    let y_train = scores.subset(&split.train_ids)?;
    let x_train = reconstruct::assemble_marginal(&ab_train, &s_train)?;
    let gam = reconstruct::fit_gam(
        &x_train,
        y_train.values(),
        &["ability".into(), "subscore".into()],
        &GamConfig::default(),
    )?;
    let eval = |ids: &[String]| -> Result<S> {
        let sub_part = sub_all.subset_subjects_by_id(ids)?;
        let ab = irt::estimate_abilities(&sub_part, &model, estimator)?;
        let s = sub_scores.subset(ids)?;
        let pred = gam.predict(&reconstruct::assemble_marginal(&ab, &s)?)?;
        Ok(reconstruct::metrics(&pred, scores.subset(ids)?.values())?.rmse)
    };
    Ok((eval(&split.validation_ids)?, eval(&split.test_ids)?))
}

/// Seeded random search over (model kind, estimator, chunk count, threshold):
/// each candidate is realized by `information_filter`, refit on the selected
/// subset, and scored by validation RMSE + λ·k. Returns the winning
/// configuration and its subset.
pub fn tune_selection<S: Scalar>(
    matrix: &ResponseMatrix,
    scores: &ScoreVector<S>,
    split: &SplitAssignment,
    cfg: &TuneConfig<S>,
    space: &FilterSearchSpace,
) -> Result<(FilterConfig<S>, SubsetResult<S>)> {
    cfg.validate()?;
    space.validate()?;
    split.validate_against(matrix.subject_ids())?;
    let train_matrix = matrix.subset_subjects_by_id(&split.train_ids)?;
    let grid = QuadratureGrid::<S>::default_ability_grid();

    let mut models: HashMap<ModelKind, FittedIrtModel<S>> = HashMap::new();
    let mut abilities: HashMap<(ModelKind, AbilityEstimator), AbilityEstimates<S>> = HashMap::new();

    let mut best: Option<(S, FilterConfig<S>, SubsetResult<S>)> = None;
    for r in 0..cfg.budget {
        let mut rng = stream_rng(cfg.seed, "tune-candidate", r as u64);
        let kind = space.model_kinds[rng.gen_range(0..space.model_kinds.len())];
        let estimator = space.estimators[rng.gen_range(0..space.estimators.len())];
        let q = space.quantile_counts[rng.gen_range(0..space.quantile_counts.len())];
        let tau_fraction: f64 = rng.gen();

        if !models.contains_key(&kind) {
            models.insert(kind, irt::fit_em(&train_matrix, kind, &grid, &EmConfig::default())?);
        }
        let model = &models[&kind];
        if !abilities.contains_key(&(kind, estimator)) {
            abilities.insert(
                (kind, estimator),
                irt::estimate_abilities(&train_matrix, model, estimator)?,
            );
        }
        let ab = &abilities[&(kind, estimator)];

        let eval_points = ability_eval_points(&ab.values, q);
        let mut max_info = S::zero();
        for &theta in &eval_points {
            for item in &model.items {
                max_info = max_info.max(fisher_information(theta, item));
            }
        }
        let candidate = FilterConfig {
            quantiles: q,
            info_threshold: S::cast(tau_fraction) * max_info,
            model_kind: kind,
            estimator,
        };
        let subset = information_filter(model, ab, &candidate)?;
        if subset.k == 0 {
            continue;
        }
        let refit = refit_subset_rmse(
            matrix,
            scores,
            split,
            &subset.item_ids,
            kind,
            estimator,
            &grid,
        );
        let (val_rmse, test_rmse) = match refit {
            Ok(pair) => pair,
            // a candidate subset can be degenerate on the training split
            // (e.g. an item constant there); such candidates are skipped
            Err(Error::InvalidInput(_)) | Err(Error::Numerical(_)) => continue,
            Err(e) => return Err(e),
        };
        let objective = val_rmse + cfg.lambda * S::cast_usize(subset.k);
        if best.as_ref().map_or(true, |(b, _, _)| objective < *b) {
            best = Some((
                objective,
                candidate,
                SubsetResult {
                    item_ids: subset.item_ids,
                    k: subset.k,
                    val_rmse: Some(val_rmse),
                    test_rmse: Some(test_rmse),
                    provenance: SubsetProvenance::InfoFilter,
                },
            ));
        }
    }
    best.map(|(_, cfg, subset)| (cfg, subset)).ok_or_else(|| {
        Error::Numerical("no tuning candidate produced a usable subset".into())
    })
}

/// Lloyd k-means on standardized item parameter vectors with seeded restarts.
/// Returns (assignments, within-cluster sum of squares) of the best restart.
fn kmeans<S: Scalar>(features: &[[S; 4]], k: usize, seed: u64, restarts: u64) -> Vec<usize> {
    let n = features.len();
    let dist2 = |a: &[S; 4], b: &[S; 4]| -> S {
        let mut acc = S::zero();
        for dim in 0..4 {
            let diff = a[dim] - b[dim];
            acc += diff * diff;
        }
        acc
    };
    let mut best_assign = vec![0usize; n];
    let mut best_wss = S::infinity();
    for restart in 0..restarts {
        let mut rng = stream_rng(seed, "kmeans-restart", restart);
        let init = rand::seq::index::sample(&mut rng, n, k).into_vec();
        let mut centroids: Vec<[S; 4]> = init.iter().map(|&i| features[i]).collect();
        let mut assign = vec![usize::MAX; n];
        for _ in 0..100 {
            let mut changed = false;
            for (i, f) in features.iter().enumerate() {
                let mut best_c = 0;
                let mut best_d = dist2(f, &centroids[0]);
                for (c, cent) in centroids.iter().enumerate().skip(1) {
                    let d = dist2(f, cent);
                    if d < best_d {
                        best_d = d;
                        best_c = c;
                    }
                }
                if assign[i] != best_c {
                    assign[i] = best_c;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            for c in 0..k {
                let members: Vec<&[S; 4]> = features
                    .iter()
                    .zip(&assign)
                    .filter(|(_, &a)| a == c)
                    .map(|(f, _)| f)
                    .collect();
                if members.is_empty() {
                    continue; // keep the previous centroid
                }
                let inv = S::one() / S::cast_usize(members.len());
                for dim in 0..4 {
                    centroids[c][dim] =
                        members.iter().map(|f| f[dim]).sum::<S>() * inv;
                }
            }
        }
        let wss: S = features
            .iter()
            .zip(&assign)
            .map(|(f, &a)| dist2(f, &centroids[a]))
            .sum();
        if wss < best_wss {
            best_wss = wss;
            best_assign = assign;
        }
    }
    best_assign
}

/// Clustering baseline: k-means on standardized (a, δ, c, u) vectors, then
/// rounds of drawing one random item from each nonempty remaining cluster
/// until `d_target` items are drawn.
pub fn cluster_select<S: Scalar>(
    model: &FittedIrtModel<S>,
    k_clusters: usize,
    d_target: usize,
    seed: u64,
) -> Result<SubsetResult<S>> {
    let d = model.n_items();
    if k_clusters < 1 || k_clusters > d {
        return Err(Error::InvalidInput(format!(
            "k_clusters={k_clusters} must lie in 1..={d}"
        )));
    }
    if d_target < 1 || d_target > d {
        return Err(Error::InvalidInput(format!(
            "d_target={d_target} must lie in 1..={d}"
        )));
    }

    // standardized feature matrix; constant dimensions contribute nothing
    let raw: Vec<[S; 4]> = model
        .items
        .iter()
        .map(|it| [it.a, it.delta, it.c, it.u])
        .collect();
    let mut features = vec![[S::zero(); 4]; d];
    for dim in 0..4 {
        let col: Vec<S> = raw.iter().map(|f| f[dim]).collect();
        let mean = scalar::mean(&col);
        let sd = scalar::sample_sd(&col);
        if sd > S::zero() {
            for (f, &v) in features.iter_mut().zip(&col) {
                f[dim] = (v - mean) / sd;
            }
        }
    }

    let assign = kmeans(&features, k_clusters, seed, 10);
    let mut remaining: Vec<Vec<usize>> = vec![Vec::new(); k_clusters];
    for (i, &c) in assign.iter().enumerate() {
        remaining[c].push(i);
    }

    let mut draw_rng = stream_rng(seed, "cluster-draw", 0);
    let mut selected = Vec::with_capacity(d_target);
    while selected.len() < d_target {
        let mut progressed = false;
        for cluster in remaining.iter_mut() {
            if selected.len() == d_target {
                break;
            }
            if cluster.is_empty() {
                continue;
            }
            let pos = draw_rng.gen_range(0..cluster.len());
            selected.push(cluster.swap_remove(pos));
            progressed = true;
        }
        if !progressed {
            break;
        }
    }
    selected.sort_unstable();

    Ok(SubsetResult {
        item_ids: selected
            .iter()
            .map(|&i| model.item_ids[i].clone())
            .collect(),
        k: selected.len(),
        val_rmse: None,
        test_rmse: None,
        provenance: SubsetProvenance::Cluster,
    })
}
