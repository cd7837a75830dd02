//! Floating-point abstraction and shared numeric helpers.

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar the numeric routines are generic over.
///
/// Implemented for `f32` and `f64`. The `cast` helper converts literal
/// constants; it panics only for values unrepresentable in the target type
/// (never for finite `f64` into `f32`, which saturates through `as`).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Default
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    fn cast(x: f64) -> Self;

    fn cast_usize(n: usize) -> Self {
        Self::cast(n as f64)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    fn cast(x: f64) -> Self {
        x as f32
    }
}

impl Scalar for f64 {
    fn cast(x: f64) -> Self {
        x
    }
}

/// Logistic function 1/(1+e^{-z}), stable for large |z|.
pub fn sigmoid<S: Scalar>(z: S) -> S {
    if z >= S::zero() {
        S::one() / (S::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}

/// log(1 + e^z) without overflow.
pub fn softplus<S: Scalar>(z: S) -> S {
    if z > S::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// log σ(z) = −softplus(−z); stays finite for all finite z.
pub fn log_sigmoid<S: Scalar>(z: S) -> S {
    -softplus(-z)
}

/// Inverse of the logistic function; input must lie strictly in (0, 1).
pub fn logit<S: Scalar>(p: S) -> S {
    (p / (S::one() - p)).ln()
}

/// log Σ e^{x_i}, guarded against empty input and −∞ entries.
pub fn logsumexp<S: Scalar>(xs: &[S]) -> S {
    let mx = xs.iter().cloned().fold(S::neg_infinity(), S::max);
    if !mx.is_finite() {
        return mx;
    }
    let sum: S = xs.iter().map(|&x| (x - mx).exp()).sum();
    mx + sum.ln()
}

pub fn mean<S: Scalar>(xs: &[S]) -> S {
    if xs.is_empty() {
        return S::zero();
    }
    let sum: S = xs.iter().cloned().sum();
    sum / S::cast_usize(xs.len())
}

/// Sample standard deviation with the n−1 denominator; 0 for n < 2.
pub fn sample_sd<S: Scalar>(xs: &[S]) -> S {
    if xs.len() < 2 {
        return S::zero();
    }
    let m = mean(xs);
    let ss: S = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    (ss / S::cast_usize(xs.len() - 1)).sqrt()
}

/// Pearson correlation; `None` when either vector has zero variance.
pub fn pearson<S: Scalar>(xs: &[S], ys: &[S]) -> Option<S> {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < 2 {
        return None;
    }
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = S::zero();
    let mut sxx = S::zero();
    let mut syy = S::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= S::zero() || syy <= S::zero() {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Linear-interpolation quantile (the "type 7" convention) of sorted data.
pub fn quantile_sorted<S: Scalar>(sorted: &[S], q: S) -> S {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = S::cast_usize(n - 1) * q.max(S::zero()).min(S::one());
    let lo = h.floor().to_f64_lossy() as usize;
    if lo >= n - 1 {
        return sorted[n - 1];
    }
    let frac = h - S::cast_usize(lo);
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Median of unsorted data (averages the two middle order statistics).
pub fn median<S: Scalar>(xs: &[S]) -> S {
    assert!(!xs.is_empty());
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / S::cast(2.0)
    }
}
