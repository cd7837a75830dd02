//! Nonparametric prediction intervals: the interval around a point prediction
//! is ± the empirical quantile of absolute residuals among the stored
//! held-out predictions nearest to it (nearest by predicted value).

use super::gam::GamFit;
use crate::error::{Error, Result};
use crate::scalar::{quantile_sorted, Scalar};
use serde::{Deserialize, Serialize};

/// Held-out (prediction, |residual|) pairs kept sorted by prediction so
/// nearest-neighbor lookups are a binary search plus a two-pointer expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualStore<S> {
    predictions: Vec<S>,
    abs_residuals: Vec<S>,
}

impl<S: Scalar> ResidualStore<S> {
    /// Builds a store from parallel predictions and observed truths; the
    /// stored residual magnitude is |truth − prediction|.
    pub fn from_predictions_and_truth(predictions: &[S], truth: &[S]) -> Result<Self> {
        if predictions.len() != truth.len() {
            return Err(Error::InvalidInput(format!(
                "{} predictions vs {} truths",
                predictions.len(),
                truth.len()
            )));
        }
        let residuals: Vec<S> = predictions
            .iter()
            .zip(truth)
            .map(|(&p, &t)| t - p)
            .collect();
        Self::new(predictions.to_vec(), residuals)
    }

    /// Builds a store from (prediction, residual) pairs.
    pub fn new(predictions: Vec<S>, residuals: Vec<S>) -> Result<Self> {
        if predictions.len() != residuals.len() {
            return Err(Error::InvalidInput(format!(
                "{} predictions vs {} residuals",
                predictions.len(),
                residuals.len()
            )));
        }
        if predictions.is_empty() {
            return Err(Error::InvalidInput("empty residual store".into()));
        }
        if predictions
            .iter()
            .chain(&residuals)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput(
                "non-finite value in residual store".into(),
            ));
        }
        let mut order: Vec<usize> = (0..predictions.len()).collect();
        order.sort_by(|&a, &b| predictions[a].partial_cmp(&predictions[b]).expect("finite"));
        Ok(ResidualStore {
            predictions: order.iter().map(|&i| predictions[i]).collect(),
            abs_residuals: order.iter().map(|&i| residuals[i].abs()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    /// Absolute residuals of the `k` stored predictions nearest to `point`,
    /// expanding outward from the insertion position; distance ties prefer
    /// the lower-prediction side, so the result is deterministic.
    fn neighborhood(&self, point: S, k: usize) -> Vec<S> {
        let n = self.len();
        let k = k.min(n);
        let mut hi = self
            .predictions
            .partition_point(|&p| p.partial_cmp(&point).expect("finite").is_lt());
        let mut lo = hi;
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            let left = lo.checked_sub(1).map(|i| (point - self.predictions[i]).abs());
            let right = (hi < n).then(|| (self.predictions[hi] - point).abs());
            match (left, right) {
                (Some(dl), Some(dr)) if dl <= dr => {
                    lo -= 1;
                    out.push(self.abs_residuals[lo]);
                }
                (_, Some(_)) => {
                    out.push(self.abs_residuals[hi]);
                    hi += 1;
                }
                (Some(_), None) => {
                    lo -= 1;
                    out.push(self.abs_residuals[lo]);
                }
                (None, None) => break,
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalConfig<S> {
    /// How many nearest stored predictions define the local residual scale.
    pub neighborhood_size: usize,
    /// Quantile of |residual| used as the half-width.
    pub coverage_level: S,
}

impl<S: Scalar> Default for IntervalConfig<S> {
    fn default() -> Self {
        IntervalConfig {
            neighborhood_size: 100,
            coverage_level: S::cast(0.95),
        }
    }
}

impl<S: Scalar> IntervalConfig<S> {
    fn validate(&self) -> Result<()> {
        if self.neighborhood_size == 0 {
            return Err(Error::InvalidInput(
                "interval neighborhood must be at least 1".into(),
            ));
        }
        if !(self.coverage_level > S::zero() && self.coverage_level < S::one()) {
            return Err(Error::InvalidInput(format!(
                "coverage level {} is outside (0, 1)",
                self.coverage_level
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval<S> {
    pub point: S,
    pub lower: S,
    pub upper: S,
    /// Number of stored residuals that actually formed the neighborhood.
    pub neighborhood_size: usize,
    pub coverage_level: S,
    /// True when the store was smaller than the requested neighborhood and
    /// every stored residual was used instead.
    pub used_full_store: bool,
}

/// Interval around an arbitrary point prediction: point ± the coverage-level
/// quantile of |residual| over the nearest stored predictions.
pub fn interval_for_point<S: Scalar>(
    point: S,
    store: &ResidualStore<S>,
    cfg: &IntervalConfig<S>,
) -> Result<PredictionInterval<S>> {
    cfg.validate()?;
    if !point.is_finite() {
        return Err(Error::InvalidInput(format!(
            "non-finite point prediction {point}"
        )));
    }
    let used_full_store = cfg.neighborhood_size > store.len();
    let mut residuals = store.neighborhood(point, cfg.neighborhood_size);
    residuals.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let half_width = quantile_sorted(&residuals, cfg.coverage_level);
    Ok(PredictionInterval {
        point,
        lower: point - half_width,
        upper: point + half_width,
        neighborhood_size: residuals.len(),
        coverage_level: cfg.coverage_level,
        used_full_store,
    })
}

/// Point prediction from a fitted additive model plus its local residual
/// interval.
pub fn predict_with_interval<S: Scalar>(
    gam: &GamFit<S>,
    x: &[S],
    store: &ResidualStore<S>,
    cfg: &IntervalConfig<S>,
) -> Result<PredictionInterval<S>> {
    let point = gam.predict_row(x)?;
    interval_for_point(point, store, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::reconstruct::gam::{fit_gam, GamConfig};

    fn cfg(k: usize, coverage: f64) -> IntervalConfig<f64> {
        IntervalConfig {
            neighborhood_size: k,
            coverage_level: coverage,
        }
    }

    #[test]
    fn zero_residual_store_gives_zero_width() {
        let preds: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let store = ResidualStore::from_predictions_and_truth(&preds, &preds).unwrap();
        let iv = interval_for_point(25.0, &store, &IntervalConfig::default()).unwrap();
        assert_eq!(iv.lower, 25.0);
        assert_eq!(iv.upper, 25.0);
    }

    #[test]
    fn full_store_quantile_matches_direct_recomputation() {
        let preds: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let truth: Vec<f64> = preds.iter().map(|&p| p + p).collect(); // |residual| = 1..100
        let store = ResidualStore::from_predictions_and_truth(&preds, &truth).unwrap();
        let iv = interval_for_point(50.0, &store, &cfg(100, 0.95)).unwrap();
        // type-7 quantile of 1..100 at 0.95: h = 99·0.95 + 1 = 95.05
        assert!((iv.upper - iv.point - 95.05).abs() < 1e-10);
        assert!((iv.point - iv.lower - 95.05).abs() < 1e-10);
        assert_eq!(iv.neighborhood_size, 100);
        assert!(!iv.used_full_store, "requested size equals store size");
    }

    #[test]
    fn partial_neighborhood_quantile_matches_direct_recomputation() {
        let preds: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let resid: Vec<f64> = preds.clone();
        let store = ResidualStore::new(preds, resid).unwrap();
        // nearest 3 to point 0 are predictions 1, 2, 3 → residuals [1, 2, 3]
        let iv = interval_for_point(0.0, &store, &cfg(3, 0.95)).unwrap();
        let expected: f64 = quantile_sorted(&[1.0, 2.0, 3.0], 0.95);
        assert!((expected - 2.9).abs() < 1e-12);
        assert!((iv.upper - iv.point - expected).abs() < 1e-12);
        assert_eq!(iv.neighborhood_size, 3);
    }

    #[test]
    fn neighborhood_is_local() {
        let preds = vec![0.0, 1.0, 2.0, 100.0, 101.0, 102.0];
        let resid = vec![1.0, 1.0, 1.0, 50.0, 50.0, 50.0];
        let store = ResidualStore::new(preds, resid).unwrap();
        let narrow = interval_for_point(1.0, &store, &cfg(3, 0.95)).unwrap();
        let wide = interval_for_point(101.0, &store, &cfg(3, 0.95)).unwrap();
        assert!((narrow.upper - narrow.lower - 2.0).abs() < 1e-12);
        assert!((wide.upper - wide.lower - 100.0).abs() < 1e-12);
    }

    #[test]
    fn oversized_neighborhood_uses_full_store_and_flags() {
        let store = ResidualStore::new(vec![1.0, 2.0, 3.0], vec![0.5, -0.25, 0.75]).unwrap();
        let iv = interval_for_point(2.0, &store, &cfg(100, 0.95)).unwrap();
        assert!(iv.used_full_store);
        assert_eq!(iv.neighborhood_size, 3);
        let expected = quantile_sorted(&[0.25, 0.5, 0.75], 0.95);
        assert!((iv.upper - iv.point - expected).abs() < 1e-12);
    }

    #[test]
    fn point_is_always_inside_its_interval() {
        let mut preds = Vec::new();
        let mut resid = Vec::new();
        let mut state = 9u64;
        for _ in 0..40 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            preds.push((state >> 33) as f64 / 1e7);
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            resid.push((state >> 33) as f64 / 1e8 - 5.0);
        }
        let store = ResidualStore::new(preds.clone(), resid).unwrap();
        for &p in preds.iter().chain(&[0.0, 500.0, -3.25]) {
            let iv = interval_for_point(p, &store, &cfg(7, 0.9)).unwrap();
            assert!(iv.lower <= iv.point && iv.point <= iv.upper);
        }
    }

    #[test]
    fn invalid_configs_and_stores_are_rejected() {
        assert!(ResidualStore::<f64>::new(vec![], vec![]).is_err());
        assert!(ResidualStore::new(vec![1.0], vec![f64::NAN]).is_err());
        let store = ResidualStore::new(vec![1.0], vec![0.5]).unwrap();
        assert!(interval_for_point(1.0, &store, &cfg(0, 0.95)).is_err());
        assert!(interval_for_point(1.0, &store, &cfg(5, 0.0)).is_err());
        assert!(interval_for_point(1.0, &store, &cfg(5, 1.0)).is_err());
        assert!(interval_for_point(f64::INFINITY, &store, &cfg(5, 0.9)).is_err());
    }

    #[test]
    fn gam_prediction_sits_inside_its_interval() {
        let x: Vec<f64> = (0..60).map(|i| i as f64 / 59.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| 2.0 * v + 1.0).collect();
        let design = Mat::from_columns(&[x.clone()]).unwrap();
        let gam = fit_gam(&design, &y, &["x".into()], &GamConfig::default()).unwrap();
        let preds = gam.predict(&design).unwrap();
        let store = ResidualStore::from_predictions_and_truth(&preds, &y).unwrap();
        let iv = predict_with_interval(&gam, &[0.37], &store, &IntervalConfig::default()).unwrap();
        assert!((iv.point - (2.0 * 0.37 + 1.0)).abs() < 1e-6);
        assert!(iv.lower <= iv.point && iv.point <= iv.upper);
        assert!(iv.used_full_store, "60-point store < default 100");
    }
}
