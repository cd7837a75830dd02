//! Item response models: 2PL/3PL/4PL link, marginal maximum-likelihood
//! fitting by EM over a fixed quadrature grid, and MAP / EAP / EAPsum
//! ability estimation under a standard-normal prior.
//!
//! The link is the slope–intercept form p = c + (u − c)·σ(aθ − δ).
//! Log-probabilities are always evaluated through stable softplus forms so
//! extreme slopes and abilities never produce −∞ or NaN.

use crate::data::ResponseMatrix;
use crate::error::{Error, Result};
use crate::optim::{self, OptimOptions};
use crate::quad::QuadratureGrid;
use crate::scalar::{self, log_sigmoid, logit, sigmoid, Scalar};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "2PL")]
    TwoPl,
    #[serde(rename = "3PL")]
    ThreePl,
    #[serde(rename = "4PL")]
    FourPl,
}

impl ModelKind {
    /// Number of free parameters per item.
    pub fn n_parameters(self) -> usize {
        match self {
            ModelKind::TwoPl => 2,
            ModelKind::ThreePl => 3,
            ModelKind::FourPl => 4,
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::TwoPl => "2PL",
            ModelKind::ThreePl => "3PL",
            ModelKind::FourPl => "4PL",
        })
    }
}

/// Per-item parameters: loading `a`, difficulty `delta`, lower asymptote `c`,
/// upper asymptote `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemParameters<S> {
    pub a: S,
    pub delta: S,
    pub c: S,
    pub u: S,
}

impl<S: Scalar> ItemParameters<S> {
    pub fn two_pl(a: S, delta: S) -> Self {
        ItemParameters { a, delta, c: S::zero(), u: S::one() }
    }

    pub fn three_pl(a: S, delta: S, c: S) -> Self {
        ItemParameters { a, delta, c, u: S::one() }
    }

    pub fn four_pl(a: S, delta: S, c: S, u: S) -> Self {
        ItemParameters { a, delta, c, u }
    }

    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        if !self.a.is_finite() || !self.delta.is_finite() {
            return Err(Error::InvalidInput(
                "loading and difficulty must be finite".into(),
            ));
        }
        if !(S::zero() <= self.c && self.c <= self.u && self.u <= S::one()) {
            return Err(Error::InvalidInput(format!(
                "asymptotes must satisfy 0 ≤ c ≤ u ≤ 1, got c={}, u={}",
                self.c, self.u
            )));
        }
        match kind {
            ModelKind::TwoPl if self.c != S::zero() || self.u != S::one() => Err(
                Error::InvalidInput("2PL items must have c=0, u=1".into()),
            ),
            ModelKind::ThreePl if self.u != S::one() => {
                Err(Error::InvalidInput("3PL items must have u=1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// p = c + (u − c)·σ(aθ − δ).
pub fn link_probability<S: Scalar>(theta: S, item: &ItemParameters<S>) -> S {
    item.c + (item.u - item.c) * sigmoid(item.a * theta - item.delta)
}

/// 1 − p computed without cancellation: (1 − u) + (u − c)·σ(−(aθ − δ)).
pub fn link_complement<S: Scalar>(theta: S, item: &ItemParameters<S>) -> S {
    (S::one() - item.u) + (item.u - item.c) * sigmoid(item.delta - item.a * theta)
}

/// ∂p/∂θ = a·(u − c)·σ(z)·σ(−z).
pub fn link_theta_derivative<S: Scalar>(theta: S, item: &ItemParameters<S>) -> S {
    let z = item.a * theta - item.delta;
    item.a * (item.u - item.c) * sigmoid(z) * sigmoid(-z)
}

/// log p, finite for all finite arguments.
fn link_log_probability<S: Scalar>(theta: S, item: &ItemParameters<S>) -> S {
    let z = item.a * theta - item.delta;
    if item.c == S::zero() {
        item.u.ln() + log_sigmoid(z)
    } else {
        (item.c + (item.u - item.c) * sigmoid(z)).ln()
    }
}

/// log(1 − p), finite for all finite arguments.
fn link_log_complement<S: Scalar>(theta: S, item: &ItemParameters<S>) -> S {
    let z = item.a * theta - item.delta;
    if item.u == S::one() {
        (S::one() - item.c).ln() + log_sigmoid(-z)
    } else {
        ((S::one() - item.u) + (item.u - item.c) * sigmoid(-z)).ln()
    }
}

/// Σ_i x_i·log p_i + (1 − x_i)·log(1 − p_i) over aligned items.
pub fn response_log_likelihood<S: Scalar>(
    responses: &[u8],
    items: &[ItemParameters<S>],
    theta: S,
) -> S {
    debug_assert_eq!(responses.len(), items.len());
    responses
        .iter()
        .zip(items)
        .map(|(&x, item)| {
            if x == 1 {
                link_log_probability(theta, item)
            } else {
                link_log_complement(theta, item)
            }
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedIrtModel<S> {
    pub kind: ModelKind,
    pub item_ids: Vec<String>,
    pub items: Vec<ItemParameters<S>>,
    pub grid: QuadratureGrid<S>,
    /// Marginal log-likelihood after each EM cycle (final entry corresponds
    /// to the returned parameters).
    pub log_likelihood_path: Vec<S>,
    pub em_cycles: usize,
    pub converged: bool,
}

impl<S: Scalar> FittedIrtModel<S> {
    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn final_log_likelihood(&self) -> S {
        *self.log_likelihood_path.last().expect("non-empty path")
    }

    pub fn validate(&self) -> Result<()> {
        if self.items.len() != self.item_ids.len() {
            return Err(Error::InvalidInput(
                "item parameter count must match item id count".into(),
            ));
        }
        for item in &self.items {
            item.validate(self.kind)?;
        }
        if !self.final_log_likelihood().is_finite() {
            return Err(Error::InvalidInput("non-finite log-likelihood".into()));
        }
        Ok(())
    }
}

/// Full-pattern log-likelihood under a fitted model.
pub fn log_likelihood<S: Scalar>(
    responses: &[u8],
    theta: S,
    model: &FittedIrtModel<S>,
) -> Result<S> {
    if responses.len() != model.n_items() {
        return Err(Error::InvalidInput(format!(
            "{} responses vs {} model items",
            responses.len(),
            model.n_items()
        )));
    }
    Ok(response_log_likelihood(responses, &model.items, theta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig<S> {
    pub max_cycles: usize,
    /// Stop when the largest absolute natural-scale parameter change in a
    /// cycle falls below this.
    pub param_tol: S,
}

impl<S: Scalar> Default for EmConfig<S> {
    fn default() -> Self {
        EmConfig {
            max_cycles: 500,
            param_tol: S::cast(1e-4),
        }
    }
}

const A_BOUNDS: (f64, f64) = (0.05, 10.0);
const DELTA_BOUNDS: (f64, f64) = (-15.0, 15.0);
const C_BOUNDS: (f64, f64) = (0.0, 0.5);
const U_BOUNDS: (f64, f64) = (0.5, 1.0);

fn param_bounds(kind: ModelKind) -> &'static [(f64, f64)] {
    const ALL: [(f64, f64); 4] = [A_BOUNDS, DELTA_BOUNDS, C_BOUNDS, U_BOUNDS];
    &ALL[..kind.n_parameters()]
}

fn to_natural<S: Scalar>(kind: ModelKind, t: &[S]) -> ItemParameters<S> {
    let bounds = param_bounds(kind);
    let nat = |i: usize| {
        let (lo, hi) = bounds[i];
        S::cast(lo) + S::cast(hi - lo) * sigmoid(t[i])
    };
    match kind {
        ModelKind::TwoPl => ItemParameters::two_pl(nat(0), nat(1)),
        ModelKind::ThreePl => ItemParameters::three_pl(nat(0), nat(1), nat(2)),
        ModelKind::FourPl => ItemParameters::four_pl(nat(0), nat(1), nat(2), nat(3)),
    }
}

fn to_transformed<S: Scalar>(kind: ModelKind, p: &ItemParameters<S>) -> Vec<S> {
    let values = [p.a, p.delta, p.c, p.u];
    param_bounds(kind)
        .iter()
        .zip(values)
        .map(|(&(lo, hi), v)| {
            let frac = ((v - S::cast(lo)) / S::cast(hi - lo))
                .max(S::cast(1e-6))
                .min(S::cast(1.0 - 1e-6));
            logit(frac)
        })
        .collect()
}

/// Expected complete-data log-likelihood for one item plus its t-space
/// gradient, given node abilities, expected counts `nbar`, and expected
/// correct counts `rbar`.
fn item_objective<S: Scalar>(
    kind: ModelKind,
    t: &[S],
    nodes: &[S],
    nbar: &[S],
    rbar: &[S],
    grad: &mut [S],
) -> S {
    let item = to_natural(kind, t);
    let k = kind.n_parameters();
    let mut g_nat = [S::zero(); 4]; // d/d(a, delta, c, u)
    let mut value = S::zero();
    for ((&theta, &n_t), &r_t) in nodes.iter().zip(nbar).zip(rbar) {
        let z = item.a * theta - item.delta;
        let s = sigmoid(z);
        let s_neg = sigmoid(-z);
        let p = item.c + (item.u - item.c) * s;
        let q = (S::one() - item.u) + (item.u - item.c) * s_neg;
        value += r_t * link_log_probability(theta, &item)
            + (n_t - r_t) * link_log_complement(theta, &item);
        let w = r_t / p - (n_t - r_t) / q;
        let band = (item.u - item.c) * s * s_neg;
        g_nat[0] += w * band * theta;
        g_nat[1] -= w * band;
        if k >= 3 {
            g_nat[2] += w * s_neg;
        }
        if k == 4 {
            g_nat[3] += w * s;
        }
    }
    let bounds = param_bounds(kind);
    for i in 0..k {
        let (lo, hi) = bounds[i];
        let st = sigmoid(t[i]);
        grad[i] = g_nat[i] * S::cast(hi - lo) * st * (S::one() - st);
    }
    value
}

/// Fits the model by EM: the E-step forms per-subject posterior weights over
/// the grid, the M-step maximizes each item's expected log-likelihood by
/// bounded quasi-Newton (bounds a ∈ [0.05, 10], δ ∈ [−15, 15], c ∈ [0, 0.5],
/// u ∈ [0.5, 1] through logistic transforms). The marginal log-likelihood is
/// non-decreasing across cycles.
pub fn fit_em<S: Scalar>(
    matrix: &ResponseMatrix,
    kind: ModelKind,
    grid: &QuadratureGrid<S>,
    cfg: &EmConfig<S>,
) -> Result<FittedIrtModel<S>> {
    let n = matrix.n_subjects();
    let d = matrix.n_items();
    for i in 0..d {
        let mean: S = matrix.item_mean(i);
        if mean <= S::zero() || mean >= S::one() {
            return Err(Error::InvalidInput(format!(
                "item '{}' is constant (mean {mean}); preprocessing must remove such items",
                matrix.item_ids()[i]
            )));
        }
    }
    if cfg.max_cycles == 0 {
        return Err(Error::InvalidInput("max_cycles must be ≥ 1".into()));
    }

    let t_len = grid.len();
    let nodes = grid.nodes().to_vec();
    let log_weights = grid.log_weights();

    // starting values: a = 1, δ = −logit(item mean), asymptotes mildly open
    let mut items: Vec<ItemParameters<S>> = (0..d)
        .map(|i| {
            let mean: S = matrix.item_mean(i);
            let delta = -logit(mean);
            match kind {
                ModelKind::TwoPl => ItemParameters::two_pl(S::one(), delta),
                ModelKind::ThreePl => ItemParameters::three_pl(S::one(), delta, S::cast(0.05)),
                ModelKind::FourPl => {
                    ItemParameters::four_pl(S::one(), delta, S::cast(0.05), S::cast(0.98))
                }
            }
        })
        .collect();

    let mut lp = vec![S::zero(); d * t_len];
    let mut lq = vec![S::zero(); d * t_len];
    let mut nbar = vec![S::zero(); t_len];
    let mut rbar = vec![S::zero(); d * t_len];
    let mut post = vec![S::zero(); t_len];
    let mut ll_path: Vec<S> = Vec::new();
    let mut cycles = 0;
    let mut converged = false;

    let marginal_and_expectations = |items: &[ItemParameters<S>],
                                     lp: &mut [S],
                                     lq: &mut [S],
                                     nbar: &mut [S],
                                     rbar: &mut [S],
                                     post: &mut [S]|
     -> Result<S> {
        for (i, item) in items.iter().enumerate() {
            for (t, &theta) in nodes.iter().enumerate() {
                lp[i * t_len + t] = link_log_probability(theta, item);
                lq[i * t_len + t] = link_log_complement(theta, item);
            }
        }
        nbar.fill(S::zero());
        rbar.fill(S::zero());
        let mut marginal = S::zero();
        for j in 0..n {
            let row = matrix.row(j);
            post.copy_from_slice(&log_weights);
            for (i, &x) in row.iter().enumerate() {
                let tab = if x == 1 {
                    &lp[i * t_len..(i + 1) * t_len]
                } else {
                    &lq[i * t_len..(i + 1) * t_len]
                };
                for (p, &v) in post.iter_mut().zip(tab) {
                    *p += v;
                }
            }
            let lse = scalar::logsumexp(post);
            if !lse.is_finite() {
                return Err(Error::Numerical(format!(
                    "marginal likelihood vanished for subject '{}'",
                    matrix.subject_ids()[j]
                )));
            }
            marginal += lse;
            for p in post.iter_mut() {
                *p = (*p - lse).exp();
            }
            for (nb, &p) in nbar.iter_mut().zip(post.iter()) {
                *nb += p;
            }
            for (i, &x) in row.iter().enumerate() {
                if x == 1 {
                    let dst = &mut rbar[i * t_len..(i + 1) * t_len];
                    for (r, &p) in dst.iter_mut().zip(post.iter()) {
                        *r += p;
                    }
                }
            }
        }
        Ok(marginal)
    };

    let opts = OptimOptions {
        max_iterations: 30,
        gradient_tolerance: S::cast(1e-7),
    };

    for cycle in 0..cfg.max_cycles {
        cycles = cycle + 1;
        let marginal =
            marginal_and_expectations(&items, &mut lp, &mut lq, &mut nbar, &mut rbar, &mut post)?;
        ll_path.push(marginal);

        let mut max_change = S::zero();
        for i in 0..d {
            let t0 = to_transformed(kind, &items[i]);
            let rbar_i = &rbar[i * t_len..(i + 1) * t_len];
            let res = optim::maximize(
                |t: &[S], g: &mut [S]| item_objective(kind, t, &nodes, &nbar, rbar_i, g),
                &t0,
                &opts,
            );
            let new_item = to_natural(kind, &res.x);
            let old = items[i];
            let change = (new_item.a - old.a)
                .abs()
                .max((new_item.delta - old.delta).abs())
                .max((new_item.c - old.c).abs())
                .max((new_item.u - old.u).abs());
            max_change = max_change.max(change);
            items[i] = new_item;
        }

        if max_change < cfg.param_tol {
            converged = true;
            break;
        }
    }

    // record the marginal log-likelihood of the returned parameters
    let final_ll =
        marginal_and_expectations(&items, &mut lp, &mut lq, &mut nbar, &mut rbar, &mut post)?;
    ll_path.push(final_ll);
    if !final_ll.is_finite() {
        return Err(Error::Numerical("non-finite final log-likelihood".into()));
    }

    Ok(FittedIrtModel {
        kind,
        item_ids: matrix.item_ids().to_vec(),
        items,
        grid: grid.clone(),
        log_likelihood_path: ll_path,
        em_cycles: cycles,
        converged,
    })
}

/// Posterior log-density derivative at θ: Σ_i (x_i/p_i − (1−x_i)/q_i)·p′_i − θ.
fn posterior_derivative<S: Scalar>(responses: &[u8], items: &[ItemParameters<S>], theta: S) -> S {
    let mut acc = -theta;
    for (&x, item) in responses.iter().zip(items) {
        let dp = link_theta_derivative(theta, item);
        if x == 1 {
            acc += dp / link_probability(theta, item);
        } else {
            acc -= dp / link_complement(theta, item);
        }
    }
    acc
}

const MAP_RANGE: (f64, f64) = (-8.0, 8.0);
const MAP_COARSE_STEPS: usize = 320;

/// Posterior mode under the standard-normal prior, located by a coarse scan
/// over [−8, 8] followed by bisection on the posterior derivative until
/// |gradient| < 1e-8 or the bracket is narrower than 1e-9.
pub fn map_estimate<S: Scalar>(responses: &[u8], items: &[ItemParameters<S>]) -> S {
    debug_assert_eq!(responses.len(), items.len());
    let half = S::cast(0.5);
    let posterior = |theta: S| {
        response_log_likelihood(responses, items, theta) - half * theta * theta
    };
    let lo = S::cast(MAP_RANGE.0);
    let step = S::cast((MAP_RANGE.1 - MAP_RANGE.0) / MAP_COARSE_STEPS as f64);
    let mut best_idx = 0;
    let mut best_val = S::neg_infinity();
    for idx in 0..=MAP_COARSE_STEPS {
        let v = posterior(lo + step * S::cast_usize(idx));
        if v > best_val {
            best_val = v;
            best_idx = idx;
        }
    }
    let mut left = lo + step * S::cast_usize(best_idx.saturating_sub(1));
    let mut right = lo + step * S::cast_usize((best_idx + 1).min(MAP_COARSE_STEPS));
    let d_left = posterior_derivative(responses, items, left);
    let d_right = posterior_derivative(responses, items, right);
    if !(d_left >= S::zero() && d_right <= S::zero()) {
        // derivative does not bracket a maximum (flat or boundary case)
        return lo + step * S::cast_usize(best_idx);
    }
    let grad_tol = S::cast(1e-8);
    let width_tol = S::cast(1e-9);
    let two = S::cast(2.0);
    for _ in 0..200 {
        let mid = (left + right) / two;
        let dm = posterior_derivative(responses, items, mid);
        if dm.abs() < grad_tol || (right - left) < width_tol {
            return mid;
        }
        if dm > S::zero() {
            left = mid;
        } else {
            right = mid;
        }
    }
    (left + right) / two
}

/// Posterior mean by quadrature: Σ θ_t L(x|θ_t) w_t / Σ L(x|θ_t) w_t,
/// evaluated in log space.
pub fn eap_estimate<S: Scalar>(
    responses: &[u8],
    items: &[ItemParameters<S>],
    grid: &QuadratureGrid<S>,
) -> Result<S> {
    debug_assert_eq!(responses.len(), items.len());
    let log_posts: Vec<S> = grid
        .nodes()
        .iter()
        .zip(grid.log_weights())
        .map(|(&theta, lw)| response_log_likelihood(responses, items, theta) + lw)
        .collect();
    let lse = scalar::logsumexp(&log_posts);
    if !lse.is_finite() {
        return Err(Error::Numerical(
            "all node likelihoods vanished in EAP".into(),
        ));
    }
    Ok(grid
        .nodes()
        .iter()
        .zip(&log_posts)
        .map(|(&theta, &lp)| theta * (lp - lse).exp())
        .sum())
}

/// P(S = s | θ) for s = 0..=d by iterated convolution of item Bernoullis.
pub fn sum_score_distribution<S: Scalar>(items: &[ItemParameters<S>], theta: S) -> Vec<S> {
    let mut dist = vec![S::one()];
    for item in items {
        let p = link_probability(theta, item);
        let q = link_complement(theta, item);
        let mut next = vec![S::zero(); dist.len() + 1];
        for (s, &mass) in dist.iter().enumerate() {
            next[s] += mass * q;
            next[s + 1] += mass * p;
        }
        dist = next;
    }
    dist
}

/// EAP ability for every possible sum score 0..=d under the model's grid.
pub fn eap_sum_table<S: Scalar>(
    items: &[ItemParameters<S>],
    grid: &QuadratureGrid<S>,
) -> Vec<S> {
    let d = items.len();
    let per_node: Vec<Vec<S>> = grid
        .nodes()
        .iter()
        .map(|&theta| sum_score_distribution(items, theta))
        .collect();
    (0..=d)
        .map(|s| {
            let mut num = S::zero();
            let mut den = S::zero();
            for ((&theta, &w), dist) in grid.nodes().iter().zip(grid.weights()).zip(&per_node) {
                num += theta * w * dist[s];
                den += w * dist[s];
            }
            if den > S::zero() {
                num / den
            } else {
                // score unreachable under the model at every node: fall back
                // to the nearer grid endpoint
                if S::cast_usize(2 * s) <= S::cast_usize(d) {
                    grid.nodes()[0]
                } else {
                    *grid.nodes().last().expect("non-empty grid")
                }
            }
        })
        .collect()
}

/// EAP ability from the total score alone.
pub fn estimate_eapsum<S: Scalar>(sum_score: usize, model: &FittedIrtModel<S>) -> Result<S> {
    if sum_score > model.n_items() {
        return Err(Error::InvalidInput(format!(
            "sum score {sum_score} exceeds item count {}",
            model.n_items()
        )));
    }
    Ok(eap_sum_table(&model.items, &model.grid)[sum_score])
}

/// Posterior mode for a full response pattern under a fitted model.
pub fn estimate_map<S: Scalar>(responses: &[u8], model: &FittedIrtModel<S>) -> Result<S> {
    if responses.len() != model.n_items() {
        return Err(Error::InvalidInput(format!(
            "{} responses vs {} model items",
            responses.len(),
            model.n_items()
        )));
    }
    Ok(map_estimate(responses, &model.items))
}

/// Posterior mean for a full response pattern under a fitted model.
pub fn estimate_eap<S: Scalar>(
    responses: &[u8],
    model: &FittedIrtModel<S>,
    grid: &QuadratureGrid<S>,
) -> Result<S> {
    if responses.len() != model.n_items() {
        return Err(Error::InvalidInput(format!(
            "{} responses vs {} model items",
            responses.len(),
            model.n_items()
        )));
    }
    eap_estimate(responses, &model.items, grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbilityEstimator {
    Map,
    Eap,
    EapSum,
}

impl std::fmt::Display for AbilityEstimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AbilityEstimator::Map => "map",
            AbilityEstimator::Eap => "eap",
            AbilityEstimator::EapSum => "eapsum",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbilityEstimates<S> {
    pub subject_ids: Vec<String>,
    pub values: Vec<S>,
    pub estimator: AbilityEstimator,
}

impl<S: Scalar> AbilityEstimates<S> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn subset(&self, ids: &[String]) -> Result<AbilityEstimates<S>> {
        let values: Result<Vec<S>> = ids
            .iter()
            .map(|id| {
                self.subject_ids
                    .iter()
                    .position(|x| x == id)
                    .map(|i| self.values[i])
                    .ok_or_else(|| Error::InvalidInput(format!("unknown subject id: {id}")))
            })
            .collect();
        Ok(AbilityEstimates {
            subject_ids: ids.to_vec(),
            values: values?,
            estimator: self.estimator,
        })
    }
}

/// Scores every subject of `matrix` under `model` with the chosen estimator.
/// The matrix items must match the model items exactly (same ids, same order).
pub fn estimate_abilities<S: Scalar>(
    matrix: &ResponseMatrix,
    model: &FittedIrtModel<S>,
    estimator: AbilityEstimator,
) -> Result<AbilityEstimates<S>> {
    if matrix.item_ids() != model.item_ids {
        return Err(Error::InvalidInput(
            "matrix items do not match model items".into(),
        ));
    }
    let values: Result<Vec<S>> = match estimator {
        AbilityEstimator::Map => (0..matrix.n_subjects())
            .map(|j| Ok(map_estimate(matrix.row(j), &model.items)))
            .collect(),
        AbilityEstimator::Eap => (0..matrix.n_subjects())
            .map(|j| eap_estimate(matrix.row(j), &model.items, &model.grid))
            .collect(),
        AbilityEstimator::EapSum => {
            let table = eap_sum_table(&model.items, &model.grid);
            Ok(matrix
                .sum_scores()
                .iter()
                .map(|&s| table[s as usize])
                .collect())
        }
    };
    Ok(AbilityEstimates {
        subject_ids: matrix.subject_ids().to_vec(),
        values: values?,
        estimator,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn grid61() -> QuadratureGrid<f64> {
        QuadratureGrid::default_ability_grid()
    }

    fn model_from(items: Vec<ItemParameters<f64>>, kind: ModelKind) -> FittedIrtModel<f64> {
        FittedIrtModel {
            kind,
            item_ids: (0..items.len()).map(|i| format!("i{i}")).collect(),
            items,
            grid: grid61(),
            log_likelihood_path: vec![0.0],
            em_cycles: 0,
            converged: true,
        }
    }

    #[test]
    fn link_probability_known_values() {
        let item = ItemParameters::<f64>::two_pl(1.0, 0.0);
        assert_eq!(link_probability(0.0, &item), 0.5);
        let item = ItemParameters::<f64>::two_pl(2.0, 1.0);
        assert!((link_probability(1.0, &item) - 0.73106).abs() < 1e-5);
        let item = ItemParameters::<f64>::four_pl(1.0, 0.0, 0.25, 1.0);
        assert!((link_probability(-30.0, &item) - 0.25).abs() < 1e-9);
    }

    #[test]
    fn link_probability_monotone_and_bounded() {
        let item = ItemParameters::four_pl(1.3, 0.4, 0.1, 0.9);
        let mut last = -1.0f64;
        for k in -60..=60 {
            let p = link_probability(k as f64 / 10.0, &item);
            assert!(p >= 0.1 && p <= 0.9);
            assert!(p > last);
            last = p;
        }
    }

    #[test]
    fn two_pl_theta_derivative_matches_a_p_q() {
        // ∂p/∂θ = a·p·(1−p) for the 2PL, checked by central differences
        let item = ItemParameters::two_pl(1.7, -0.3);
        for k in -20..=20 {
            let theta = k as f64 / 5.0;
            let h = 1e-6;
            let fd = (link_probability(theta + h, &item) - link_probability(theta - h, &item))
                / (2.0 * h);
            let p = link_probability(theta, &item);
            assert!((fd - item.a * p * (1.0 - p)).abs() < 1e-6);
            assert!((link_theta_derivative(theta, &item) - item.a * p * (1.0 - p)).abs() < 1e-12);
        }
    }

    #[test]
    fn log_likelihood_oracles() {
        let model = model_from(vec![ItemParameters::two_pl(1.0, 0.0)], ModelKind::TwoPl);
        assert!((log_likelihood(&[1], 0.0, &model).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        assert!((log_likelihood(&[0], 0.0, &model).unwrap() - 0.5f64.ln()).abs() < 1e-15);

        // three known items at θ=0.3, summed by hand term by term
        let items = vec![
            ItemParameters::two_pl(1.0, -0.5),
            ItemParameters::two_pl(1.5, 0.2),
            ItemParameters::two_pl(0.8, 0.1),
        ];
        let theta: f64 = 0.3;
        let resp = [1u8, 0, 1];
        let expected: f64 = {
            let p1 = 1.0 / (1.0 + (-(1.0 * theta + 0.5)).exp());
            let p2 = 1.0 / (1.0 + (-(1.5 * theta - 0.2)).exp());
            let p3 = 1.0 / (1.0 + (-(0.8 * theta - 0.1)).exp());
            p1.ln() + (1.0 - p2).ln() + p3.ln()
        };
        let model = model_from(items, ModelKind::TwoPl);
        assert!((log_likelihood(&resp, theta, &model).unwrap() - expected).abs() < 1e-10);
    }

    #[test]
    fn log_likelihood_monotone_for_all_correct() {
        let items = vec![
            ItemParameters::two_pl(1.0, -0.5),
            ItemParameters::two_pl(1.5, 0.2),
        ];
        let resp = [1u8, 1];
        let mut last = f64::NEG_INFINITY;
        for k in -30..=30 {
            let v = response_log_likelihood(&resp, &items, k as f64 / 5.0);
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn log_likelihood_rejects_misaligned_responses() {
        let model = model_from(vec![ItemParameters::two_pl(1.0, 0.0)], ModelKind::TwoPl);
        assert!(log_likelihood(&[1, 0], 0.0, &model).is_err());
    }

    #[test]
    fn map_prior_mode_and_single_item_oracle() {
        // no items → prior mode 0
        assert!(map_estimate::<f64>(&[], &[]).abs() < 1e-9);
        // one correct item a=1, δ=0: mode solves θ = 1 − σ(θ) ≈ 0.401058
        let items = vec![ItemParameters::<f64>::two_pl(1.0, 0.0)];
        let m = map_estimate(&[1], &items);
        assert!((m - 0.401_058_137_541_547).abs() < 1e-6, "map = {m}");
        // symmetric correct/incorrect pair → 0
        let items = vec![
            ItemParameters::<f64>::two_pl(1.0, 0.0),
            ItemParameters::two_pl(1.0, 0.0),
        ];
        assert!(map_estimate(&[1, 0], &items).abs() < 1e-8);
    }

    #[test]
    fn eap_matches_dense_grid_oracle() {
        // one correct item a=1, δ=0 on the default grid vs a 10,001-point
        // quadrature on [−8, 8] evaluated independently: 0.413241928…
        let items = vec![ItemParameters::two_pl(1.0, 0.0)];
        let e = eap_estimate(&[1], &items, &grid61()).unwrap();
        assert!((e - 0.413_241_928_283_804_6).abs() < 1e-4, "eap = {e}");

        // prior-only and symmetric cases
        assert!(eap_estimate::<f64>(&[], &[], &grid61()).unwrap().abs() < 1e-12);
        let items = vec![
            ItemParameters::two_pl(1.0, 0.0),
            ItemParameters::two_pl(1.0, 0.0),
        ];
        assert!(eap_estimate(&[1, 0], &items, &grid61()).unwrap().abs() < 1e-9);
    }

    #[test]
    fn sum_score_distribution_matches_enumeration() {
        // heterogeneous 3-item bank: recursion equals brute-force pattern
        // enumeration node by node
        let items = vec![
            ItemParameters::two_pl(1.0, -0.5),
            ItemParameters::two_pl(1.5, 0.2),
            ItemParameters::two_pl(0.8, 0.1),
        ];
        for &theta in &[-2.0, -0.3, 0.0, 1.1, 3.0] {
            let dist = sum_score_distribution(&items, theta);
            let mut brute = vec![0.0f64; 4];
            for pattern in 0u8..8 {
                let mut prob = 1.0;
                let mut score = 0usize;
                for (i, item) in items.iter().enumerate() {
                    let p = link_probability(theta, item);
                    if pattern >> i & 1 == 1 {
                        prob *= p;
                        score += 1;
                    } else {
                        prob *= 1.0 - p;
                    }
                }
                brute[score] += prob;
            }
            for s in 0..4 {
                assert!(
                    (dist[s] - brute[s]).abs() < 1e-12,
                    "θ={theta}, s={s}: {} vs {}",
                    dist[s],
                    brute[s]
                );
            }
            let total: f64 = dist.iter().sum();
            assert!((total - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn eapsum_equals_binomial_eap_for_identical_items() {
        let item = ItemParameters::two_pl(1.2, 0.3);
        let items = vec![item; 5];
        let grid = grid61();
        let table = eap_sum_table(&items, &grid);
        for s in 0..=5usize {
            // binomial sum-score likelihood: C(5,s) p^s q^(5−s); the constant
            // cancels in the EAP ratio
            let mut num = 0.0f64;
            let mut den = 0.0f64;
            for (&theta, &w) in grid.nodes().iter().zip(grid.weights()) {
                let p = link_probability(theta, &item);
                let like = p.powi(s as i32) * (1.0 - p).powi((5 - s) as i32);
                num += theta * w * like;
                den += w * like;
            }
            assert!((table[s] - num / den).abs() < 1e-10);
        }
    }

    #[test]
    fn eapsum_is_strictly_increasing_in_score() {
        let items = vec![
            ItemParameters::two_pl(0.9, -0.7),
            ItemParameters::two_pl(1.4, 0.0),
            ItemParameters::two_pl(2.0, 0.9),
            ItemParameters::two_pl(0.7, 0.2),
        ];
        let table = eap_sum_table(&items, &grid61());
        for w in table.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn estimators_are_invariant_to_item_order() {
        let items = vec![
            ItemParameters::<f64>::two_pl(0.9, -0.7),
            ItemParameters::two_pl(1.4, 0.0),
            ItemParameters::two_pl(2.0, 0.9),
        ];
        let resp = [1u8, 0, 1];
        let perm = [2usize, 0, 1];
        let items_p: Vec<_> = perm.iter().map(|&i| items[i]).collect();
        let resp_p: Vec<u8> = perm.iter().map(|&i| resp[i]).collect();
        let g = grid61();
        assert!(
            (map_estimate(&resp, &items) - map_estimate(&resp_p, &items_p)).abs() < 1e-12
        );
        assert!(
            (eap_estimate(&resp, &items, &g).unwrap()
                - eap_estimate(&resp_p, &items_p, &g).unwrap())
            .abs()
                < 1e-12
        );
        let t1 = eap_sum_table(&items, &g);
        let t2 = eap_sum_table(&items_p, &g);
        for (a, b) in t1.iter().zip(&t2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_em_rejects_constant_items() {
        let m = ResponseMatrix::new(
            "const",
            vec!["s1".into(), "s2".into(), "s3".into()],
            vec!["i1".into(), "i2".into()],
            vec![1, 1, 0, 1, 1, 1],
        )
        .unwrap();
        let err = fit_em(&m, ModelKind::TwoPl, &grid61(), &EmConfig::default()).unwrap_err();
        assert!(err.to_string().contains("constant"));
    }

    #[test]
    fn fit_em_recovers_parameters_and_is_monotone() {
        let items = synth::uniform_two_pl_bank::<f64>(12, 0.5, 2.5, 1.0, 99);
        let thetas = synth::standard_normal_abilities::<f64>(600, 77);
        let m = synth::sample_responses(&items, &thetas, 5).unwrap();
        let fit = fit_em(&m, ModelKind::TwoPl, &grid61(), &EmConfig::default()).unwrap();
        assert!(fit.converged);
        for w in fit.log_likelihood_path.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "log-likelihood decreased: {w:?}");
        }
        let true_delta: Vec<f64> = items.iter().map(|i| i.delta).collect();
        let est_delta: Vec<f64> = fit.items.iter().map(|i| i.delta).collect();
        let r = scalar::pearson(&est_delta, &true_delta).unwrap();
        assert!(r > 0.9, "difficulty recovery correlation {r}");
    }

    #[test]
    fn map_and_eap_agree_on_long_tests() {
        // With a long test the posterior tightens and the mode/mean gap
        // shrinks; tail subjects keep some skew, hence the 0.1 allowance.
        let items = synth::uniform_two_pl_bank::<f64>(150, 0.8, 2.0, 1.0, 3);
        let thetas = synth::standard_normal_abilities::<f64>(20, 4);
        let m = synth::sample_responses(&items, &thetas, 6).unwrap();
        let g = grid61();
        for j in 0..m.n_subjects() {
            let map = map_estimate(m.row(j), &items);
            let eap = eap_estimate(m.row(j), &items, &g).unwrap();
            assert!((map - eap).abs() < 0.1, "map {map} vs eap {eap}");
        }
    }
}
