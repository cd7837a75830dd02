//! Logistic score-link baseline: each item's correctness is modeled as
//! Bernoulli(σ(a_i·s − δ_i)) in the percent score s, fit by per-item
//! maximum-likelihood logistic regression. Scores are recovered as the
//! maximum a posteriori node of a fixed 4096-point grid on [0, 100] under an
//! empirical (kernel-density) score prior.

use crate::data::{ResponseMatrix, ScoreVector};
use crate::error::{Error, Result};
use crate::scalar::{self, log_sigmoid, quantile_sorted, sigmoid, Scalar};
use serde::{Deserialize, Serialize};

/// Number of candidate scores in the MAP search grid over [0, 100].
pub const SCORE_GRID_SIZE: usize = 4096;

/// Largest admissible |a_i · 100|. Slopes steeper than this over the full
/// score range are treated as separation artifacts: the slope is clamped and
/// the intercept refit alone, with the item flagged.
const MAX_SLOPE_TIMES_RANGE: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineItem<S> {
    pub item_id: String,
    /// Slope per percent-score unit.
    pub a: S,
    pub delta: S,
    /// True when the unconstrained fit ran into (near-)separation and the
    /// slope was clamped to |a·100| = 25 with the intercept refit alone.
    pub capped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticBaseline<S> {
    pub items: Vec<BaselineItem<S>>,
    /// Log prior density evaluated at every grid node: a Gaussian kernel
    /// density estimate of the training scores, or a flat density over
    /// [0, 100] when the scores are too concentrated to support one.
    pub log_prior: Vec<S>,
    /// Kernel bandwidth actually used (0 when the flat fallback triggered).
    pub bandwidth: S,
    pub uniform_prior: bool,
}

impl<S: Scalar> LogisticBaseline<S> {
    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn item_ids(&self) -> Vec<String> {
        self.items.iter().map(|it| it.item_id.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.items.is_empty() {
            return Err(Error::InvalidInput("baseline has no items".into()));
        }
        if self.log_prior.len() != SCORE_GRID_SIZE {
            return Err(Error::InvalidInput(format!(
                "log prior has {} nodes, expected {SCORE_GRID_SIZE}",
                self.log_prior.len()
            )));
        }
        if self
            .items
            .iter()
            .any(|it| !it.a.is_finite() || !it.delta.is_finite())
        {
            return Err(Error::InvalidInput(
                "non-finite baseline item parameter".into(),
            ));
        }
        Ok(())
    }
}

/// The MAP candidate grid: 4096 equally spaced scores from 0 to 100 inclusive.
pub fn score_grid<S: Scalar>() -> Vec<S> {
    let step = S::cast(100.0) / S::cast_usize(SCORE_GRID_SIZE - 1);
    (0..SCORE_GRID_SIZE)
        .map(|t| S::cast_usize(t) * step)
        .collect()
}

fn item_log_likelihood<S: Scalar>(a: S, delta: S, scores: &[S], resp: &[u8]) -> S {
    scores
        .iter()
        .zip(resp)
        .map(|(&s, &x)| {
            let eta = a * s - delta;
            if x == 1 {
                log_sigmoid(eta)
            } else {
                log_sigmoid(-eta)
            }
        })
        .sum()
}

/// Damped Newton (Fisher-scoring) ascent of the two-parameter per-item
/// likelihood. Separation makes the likelihood unbounded along growing |a|;
/// the iteration cap leaves a large finite slope that the caller clamps.
fn newton_fit<S: Scalar>(scores: &[S], resp: &[u8], start: (S, S)) -> (S, S) {
    let (mut a, mut delta) = start;
    let mut ll = item_log_likelihood(a, delta, scores, resp);
    for _ in 0..200 {
        let mut ga = S::zero();
        let mut gd = S::zero();
        let mut faa = S::zero();
        let mut fad = S::zero();
        let mut fdd = S::zero();
        for (&s, &x) in scores.iter().zip(resp) {
            let eta = a * s - delta;
            let p = sigmoid(eta);
            let w = p * sigmoid(-eta);
            let r = S::cast(f64::from(x)) - p;
            ga += r * s;
            gd -= r;
            faa += w * s * s;
            fad -= w * s;
            fdd += w;
        }
        if ga.abs().max(gd.abs()) < S::cast(1e-10) {
            break;
        }
        let det = faa * fdd - fad * fad;
        if !(det > S::cast(1e-300)) {
            break;
        }
        // Newton direction: (Fisher information)⁻¹ · gradient.
        let mut da = (fdd * ga - fad * gd) / det;
        let mut dd = (faa * gd - fad * ga) / det;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = item_log_likelihood(a + da, delta + dd, scores, resp);
            if cand.is_finite() && cand >= ll {
                a += da;
                delta += dd;
                ll = cand;
                accepted = true;
                break;
            }
            da = da / S::cast(2.0);
            dd = dd / S::cast(2.0);
        }
        if !accepted {
            break;
        }
    }
    (a, delta)
}

/// One-dimensional damped Newton refit of the intercept with the slope held
/// fixed (used after clamping a separated slope).
fn refit_delta<S: Scalar>(a: S, scores: &[S], resp: &[u8], start: S) -> S {
    let mut delta = start;
    let mut ll = item_log_likelihood(a, delta, scores, resp);
    for _ in 0..200 {
        let mut g = S::zero();
        let mut f = S::zero();
        for (&s, &x) in scores.iter().zip(resp) {
            let eta = a * s - delta;
            let p = sigmoid(eta);
            g += p - S::cast(f64::from(x));
            f += p * sigmoid(-eta);
        }
        if g.abs() < S::cast(1e-10) || !(f > S::cast(1e-300)) {
            break;
        }
        let mut step = g / f;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = item_log_likelihood(a, delta + step, scores, resp);
            if cand.is_finite() && cand >= ll {
                delta += step;
                ll = cand;
                accepted = true;
                break;
            }
            step = step / S::cast(2.0);
        }
        if !accepted {
            break;
        }
    }
    delta
}

/// Gaussian kernel density of the training scores on the grid. The bandwidth
/// follows the common normal-reference rule h = 0.9·min(sd, IQR/1.34)·n^(−1/5)
/// (falling back to sd alone when the IQR collapses); a degenerate spread
/// yields a flat density over [0, 100], flagged, so the MAP argmax becomes
/// purely likelihood-driven.
fn empirical_log_prior<S: Scalar>(scores: &[S]) -> (Vec<S>, S, bool) {
    let n = scores.len();
    let sd = scalar::sample_sd(scores);
    let mut sorted = scores.to_vec();
    sorted.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
    let iqr = quantile_sorted(&sorted, S::cast(0.75)) - quantile_sorted(&sorted, S::cast(0.25));
    let spread = if iqr > S::zero() {
        sd.min(iqr / S::cast(1.34))
    } else {
        sd
    };
    let h = S::cast(0.9) * spread * S::cast_usize(n).powf(S::cast(-0.2));
    if !(h > S::cast(1e-9)) {
        let flat = -S::cast(100.0).ln();
        return (vec![flat; SCORE_GRID_SIZE], S::zero(), true);
    }
    let norm = S::cast_usize(n).ln() + h.ln() + S::cast(0.5) * S::cast(2.0 * std::f64::consts::PI).ln();
    let log_prior = score_grid::<S>()
        .iter()
        .map(|&g| {
            let kernel_logs: Vec<S> = scores
                .iter()
                .map(|&s| {
                    let z = (g - s) / h;
                    -S::cast(0.5) * z * z
                })
                .collect();
            scalar::logsumexp(&kernel_logs) - norm
        })
        .collect();
    (log_prior, h, false)
}

/// Per-item maximum-likelihood logistic regression of the binary responses on
/// the percent score, plus the empirical score prior used for MAP scoring.
pub fn fit_logistic_baseline<S: Scalar>(
    matrix: &ResponseMatrix,
    scores: &ScoreVector<S>,
) -> Result<LogisticBaseline<S>> {
    if matrix.subject_ids() != scores.subject_ids() {
        return Err(Error::InvalidInput(
            "response matrix and scores have different subjects".into(),
        ));
    }
    if matrix.n_subjects() < 2 {
        return Err(Error::InvalidInput(
            "score-link baseline needs at least 2 subjects".into(),
        ));
    }
    let s = scores.values();
    let n = matrix.n_subjects();
    let cap = S::cast(MAX_SLOPE_TIMES_RANGE / 100.0);
    let mut items = Vec::with_capacity(matrix.n_items());
    for i in 0..matrix.n_items() {
        let mean = matrix.item_mean::<S>(i);
        if mean <= S::zero() || mean >= S::one() {
            return Err(Error::InvalidInput(format!(
                "item '{}' is constant; its score link is unidentified",
                matrix.item_ids()[i]
            )));
        }
        let resp: Vec<u8> = (0..n).map(|j| matrix.value(j, i)).collect();
        let start_delta = -scalar::logit(mean);
        let (mut a, mut delta) = newton_fit(s, &resp, (S::zero(), start_delta));
        let mut capped = false;
        if !(a.abs() <= cap) {
            a = if a > S::zero() { cap } else { -cap };
            delta = refit_delta(a, s, &resp, start_delta);
            capped = true;
        }
        items.push(BaselineItem {
            item_id: matrix.item_ids()[i].clone(),
            a,
            delta,
            capped,
        });
    }
    let (log_prior, bandwidth, uniform_prior) = empirical_log_prior(s);
    Ok(LogisticBaseline {
        items,
        log_prior,
        bandwidth,
        uniform_prior,
    })
}

fn check_responses<S: Scalar>(responses: &[u8], baseline: &LogisticBaseline<S>) -> Result<()> {
    baseline.validate()?;
    if responses.len() != baseline.items.len() {
        return Err(Error::InvalidInput(format!(
            "{} responses for a {}-item baseline",
            responses.len(),
            baseline.items.len()
        )));
    }
    if responses.iter().any(|&x| x > 1) {
        return Err(Error::InvalidInput("responses must be 0 or 1".into()));
    }
    Ok(())
}

/// Log posterior of one response vector at every grid node: log prior plus
/// the summed per-item log-likelihoods, in item order.
pub fn score_log_posterior<S: Scalar>(
    responses: &[u8],
    baseline: &LogisticBaseline<S>,
) -> Result<Vec<S>> {
    check_responses(responses, baseline)?;
    let grid = score_grid::<S>();
    Ok(grid
        .iter()
        .enumerate()
        .map(|(t, &g)| {
            let mut acc = baseline.log_prior[t];
            for (item, &x) in baseline.items.iter().zip(responses) {
                let eta = item.a * g - item.delta;
                acc += if x == 1 {
                    log_sigmoid(eta)
                } else {
                    log_sigmoid(-eta)
                };
            }
            acc
        })
        .collect())
}

fn argmax_node<S: Scalar>(posterior: &[S]) -> usize {
    let mut best = 0;
    for (t, &v) in posterior.iter().enumerate() {
        if v > posterior[best] {
            best = t;
        }
    }
    best
}

/// MAP score: the grid node maximizing the log posterior (ties resolve to the
/// lowest-scoring node).
pub fn score_map_baseline<S: Scalar>(responses: &[u8], baseline: &LogisticBaseline<S>) -> Result<S> {
    let posterior = score_log_posterior(responses, baseline)?;
    Ok(score_grid::<S>()[argmax_node(&posterior)])
}

/// Batched MAP scoring of a whole response matrix. Per-item grid tables are
/// precomputed once; each table entry equals the expression used by
/// [`score_log_posterior`], and terms accumulate in the same item order, so
/// results match the one-subject path bit for bit.
pub fn baseline_scores<S: Scalar>(
    matrix: &ResponseMatrix,
    baseline: &LogisticBaseline<S>,
) -> Result<ScoreVector<S>> {
    baseline.validate()?;
    if matrix.item_ids() != baseline.item_ids().as_slice() {
        return Err(Error::InvalidInput(
            "response matrix items do not match the baseline items".into(),
        ));
    }
    let grid = score_grid::<S>();
    let d = baseline.items.len();
    let mut log_p = vec![S::zero(); d * SCORE_GRID_SIZE];
    let mut log_q = vec![S::zero(); d * SCORE_GRID_SIZE];
    for (i, item) in baseline.items.iter().enumerate() {
        for (t, &g) in grid.iter().enumerate() {
            let eta = item.a * g - item.delta;
            log_p[i * SCORE_GRID_SIZE + t] = log_sigmoid(eta);
            log_q[i * SCORE_GRID_SIZE + t] = log_sigmoid(-eta);
        }
    }
    let mut values = Vec::with_capacity(matrix.n_subjects());
    let mut posterior = vec![S::zero(); SCORE_GRID_SIZE];
    for j in 0..matrix.n_subjects() {
        posterior.copy_from_slice(&baseline.log_prior);
        for (i, &x) in matrix.row(j).iter().enumerate() {
            let table = if x == 1 { &log_p } else { &log_q };
            let row = &table[i * SCORE_GRID_SIZE..(i + 1) * SCORE_GRID_SIZE];
            for (acc, &v) in posterior.iter_mut().zip(row) {
                *acc += v;
            }
        }
        values.push(grid[argmax_node(&posterior)]);
    }
    ScoreVector::new(matrix.subject_ids().to_vec(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::stream_rng;
    use rand::Rng;

    fn fixture(
        n: usize,
        seed: u64,
        gen_prob: impl Fn(f64) -> f64,
    ) -> (ResponseMatrix, ScoreVector<f64>) {
        let mut rng = stream_rng(seed, "baseline-fixture", 0);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 100.0).collect();
        let data: Vec<u8> = scores
            .iter()
            .map(|&s| u8::from(rng.gen::<f64>() < gen_prob(s)))
            .collect();
        let ids: Vec<String> = (0..n).map(|j| format!("s{j:05}")).collect();
        let matrix =
            ResponseMatrix::new("fixture", ids.clone(), vec!["i00001".into()], data).unwrap();
        let scores = ScoreVector::new(ids, scores).unwrap();
        (matrix, scores)
    }

    #[test]
    fn grid_spans_zero_to_hundred_with_4096_nodes() {
        let grid = score_grid::<f64>();
        assert_eq!(grid.len(), 4096);
        assert_eq!(grid[0], 0.0);
        assert_eq!(*grid.last().unwrap(), 100.0);
        assert_eq!(grid[1], 100.0 / 4095.0);
        for w in grid.windows(2) {
            assert!((w[1] - w[0] - 100.0 / 4095.0).abs() < 1e-12);
        }
    }

    #[test]
    fn score_independent_item_gets_near_zero_slope() {
        let (matrix, scores) = fixture(2000, 11, |_| 0.6);
        let fit = fit_logistic_baseline(&matrix, &scores).unwrap();
        assert!(fit.items[0].a.abs() < 0.01, "a = {}", fit.items[0].a);
        assert!(!fit.items[0].capped);
    }

    #[test]
    fn recovers_planted_slope_and_intercept_within_twenty_percent() {
        let (a, delta) = (0.05, 2.0);
        let (matrix, scores) = fixture(5000, 12, |s| {
            crate::scalar::sigmoid(a * s - delta)
        });
        let fit = fit_logistic_baseline(&matrix, &scores).unwrap();
        let item = &fit.items[0];
        assert!(!item.capped);
        assert!(
            (item.a - a).abs() <= 0.2 * a,
            "a = {} vs planted {a}",
            item.a
        );
        assert!(
            (item.delta - delta).abs() <= 0.2 * delta,
            "delta = {} vs planted {delta}",
            item.delta
        );
    }

    #[test]
    fn monotone_item_gets_positive_slope() {
        let (matrix, scores) = fixture(1000, 13, |s| 0.2 + 0.6 * s / 100.0);
        let fit = fit_logistic_baseline(&matrix, &scores).unwrap();
        assert!(fit.items[0].a > 0.0);
        assert!(!fit.items[0].capped);
    }

    #[test]
    fn perfect_separation_caps_slope_and_flags_item() {
        let mut rng = stream_rng(14, "baseline-fixture", 1);
        let scores: Vec<f64> = (0..200).map(|_| rng.gen::<f64>() * 100.0).collect();
        let data: Vec<u8> = scores.iter().map(|&s| u8::from(s > 50.0)).collect();
        let ids: Vec<String> = (0..200).map(|j| format!("s{j:05}")).collect();
        let matrix =
            ResponseMatrix::new("sep", ids.clone(), vec!["i00001".into()], data).unwrap();
        let scores = ScoreVector::new(ids, scores).unwrap();
        let fit = fit_logistic_baseline(&matrix, &scores).unwrap();
        let item = &fit.items[0];
        assert!(item.capped);
        assert_eq!(item.a, 0.25);
        assert!(item.delta.is_finite());
        // the clamped link still crosses near the separation threshold
        assert!((item.delta / item.a - 50.0).abs() < 10.0);
    }

    #[test]
    fn constant_item_is_rejected_by_name() {
        let ids: Vec<String> = (0..4).map(|j| format!("s{j:05}")).collect();
        let matrix =
            ResponseMatrix::new("const", ids.clone(), vec!["i00007".into()], vec![1, 1, 1, 1])
                .unwrap();
        let scores = ScoreVector::new(ids, vec![10.0, 20.0, 30.0, 40.0]).unwrap();
        let err = fit_logistic_baseline(&matrix, &scores).unwrap_err();
        assert!(err.to_string().contains("i00007"), "{err}");
    }

    #[test]
    fn grid_posterior_matches_independent_per_node_recomputation() {
        let baseline = LogisticBaseline {
            items: vec![
                BaselineItem {
                    item_id: "i00001".into(),
                    a: 0.1,
                    delta: 3.0,
                    capped: false,
                },
                BaselineItem {
                    item_id: "i00002".into(),
                    a: 0.05,
                    delta: 1.0,
                    capped: false,
                },
            ],
            log_prior: vec![-(100.0f64.ln()); SCORE_GRID_SIZE],
            bandwidth: 0.0,
            uniform_prior: true,
        };
        let responses = [1u8, 0];
        let posterior = score_log_posterior(&responses, &baseline).unwrap();
        let grid = score_grid::<f64>();
        let mut best = 0usize;
        for t in 0..SCORE_GRID_SIZE {
            let g = grid[t];
            let expected = -(100.0f64.ln())
                + log_sigmoid(0.1 * g - 3.0)
                + log_sigmoid(-(0.05 * g - 1.0));
            assert_eq!(posterior[t], expected, "node {t}");
            if posterior[t] > posterior[best] {
                best = t;
            }
        }
        assert_eq!(
            score_map_baseline(&responses, &baseline).unwrap(),
            grid[best]
        );
    }

    #[test]
    fn more_correct_answers_never_lower_the_map_score() {
        let baseline = LogisticBaseline {
            items: vec![
                BaselineItem {
                    item_id: "i00001".into(),
                    a: 0.1,
                    delta: 5.0,
                    capped: false,
                },
                BaselineItem {
                    item_id: "i00002".into(),
                    a: 0.08,
                    delta: 3.0,
                    capped: false,
                },
            ],
            log_prior: vec![-(100.0f64.ln()); SCORE_GRID_SIZE],
            bandwidth: 0.0,
            uniform_prior: true,
        };
        let all = score_map_baseline(&[1, 1], &baseline).unwrap();
        let one = score_map_baseline(&[1, 0], &baseline).unwrap();
        let none = score_map_baseline(&[0, 0], &baseline).unwrap();
        assert!(all >= one, "{all} < {one}");
        assert!(one >= none, "{one} < {none}");
    }

    #[test]
    fn kernel_prior_matches_direct_mixture_recomputation() {
        let (matrix, scores) = fixture(40, 15, |s| crate::scalar::sigmoid(0.04 * s - 1.5));
        let fit = fit_logistic_baseline(&matrix, &scores).unwrap();
        assert!(!fit.uniform_prior);
        let vals = scores.values();
        let n = vals.len();
        let sd = crate::scalar::sample_sd(vals);
        let mut sorted = vals.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
        let h = 0.9 * sd.min(iqr / 1.34) * (n as f64).powf(-0.2);
        assert_eq!(fit.bandwidth, h);
        let grid = score_grid::<f64>();
        for &t in &[0usize, 1, 511, 2048, 4095] {
            let mix: f64 = vals
                .iter()
                .map(|&s| (-0.5 * ((grid[t] - s) / h).powi(2)).exp())
                .sum::<f64>()
                / (n as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
            assert!(
                (fit.log_prior[t] - mix.ln()).abs() < 1e-10,
                "node {t}: {} vs {}",
                fit.log_prior[t],
                mix.ln()
            );
        }
        // the density integrates to one over the real line; kernels centred
        // near 0 or 100 leak some mass past the grid edges, so the grid sum
        // sits a little below one — but never above, and a wrong
        // normalization constant (missing h, missing √2π) would land far
        // outside these bounds
        let step = 100.0 / 4095.0;
        let mass: f64 = fit.log_prior.iter().map(|lp| lp.exp() * step).sum();
        assert!(mass > 0.8 && mass < 1.0 + 1e-6, "mass {mass}");
    }

    #[test]
    fn degenerate_scores_fall_back_to_flat_prior() {
        let ids: Vec<String> = (0..6).map(|j| format!("s{j:05}")).collect();
        let matrix = ResponseMatrix::new(
            "flat",
            ids.clone(),
            vec!["i00001".into()],
            vec![0, 1, 0, 1, 0, 1],
        )
        .unwrap();
        let scores = ScoreVector::new(ids, vec![50.0; 6]).unwrap();
        let fit = fit_logistic_baseline(&matrix, &scores).unwrap();
        assert!(fit.uniform_prior);
        assert_eq!(fit.bandwidth, 0.0);
        assert!(fit.log_prior.iter().all(|&lp| lp == -(100.0f64.ln())));
        assert!(score_map_baseline(&[1], &fit).unwrap().is_finite());
    }

    #[test]
    fn batched_scoring_matches_single_subject_path() {
        let mut rng = stream_rng(16, "baseline-fixture", 2);
        let n = 60;
        let scores: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 100.0).collect();
        let d = 5;
        let mut data = Vec::with_capacity(n * d);
        for &s in &scores {
            for i in 0..d {
                let p = crate::scalar::sigmoid(0.03 * s - 0.4 * i as f64);
                data.push(u8::from(rng.gen::<f64>() < p));
            }
        }
        let ids: Vec<String> = (0..n).map(|j| format!("s{j:05}")).collect();
        let item_ids: Vec<String> = (0..d).map(|i| format!("i{:05}", i + 1)).collect();
        let matrix = ResponseMatrix::new("batch", ids.clone(), item_ids, data).unwrap();
        let scores = ScoreVector::new(ids, scores).unwrap();
        let fit = fit_logistic_baseline(&matrix, &scores).unwrap();
        let batch = baseline_scores(&matrix, &fit).unwrap();
        for j in 0..n {
            let single = score_map_baseline(matrix.row(j), &fit).unwrap();
            assert_eq!(batch.values()[j], single, "subject {j}");
        }
    }

    #[test]
    fn misaligned_inputs_are_rejected() {
        let (matrix, scores) = fixture(10, 17, |_| 0.5);
        let wrong = ScoreVector::new(
            (0..10).map(|j| format!("x{j:05}")).collect(),
            scores.values().to_vec(),
        )
        .unwrap();
        assert!(fit_logistic_baseline(&matrix, &wrong).is_err());
        let fit = fit_logistic_baseline(&matrix, &scores).unwrap();
        assert!(score_map_baseline(&[1, 0], &fit).is_err());
        assert!(score_map_baseline(&[2], &fit).is_err());
    }
}
