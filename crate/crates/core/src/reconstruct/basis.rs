//! Clamped cubic B-spline basis with quantile-placed interior knots, linear
//! extension beyond the training range, and a second-order difference
//! penalty whose null space is exactly the linear functions.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::{quantile_sorted, Scalar};

const ORDER: usize = 4; // cubic

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BSplineBasis<S> {
    /// Full clamped knot vector: 4 copies of the range minimum, strictly
    /// increasing interior knots, 4 copies of the range maximum.
    knots: Vec<S>,
}

impl<S: Scalar> BSplineBasis<S> {
    /// Builds a basis for `values` with at most `n_basis` functions; interior
    /// knots sit at the empirical quantiles i/(n_basis − 3), deduplicated, so
    /// heavily tied data yields a smaller basis.
    pub fn from_values(values: &[S], n_basis: usize) -> Result<Self> {
        if n_basis < ORDER {
            return Err(Error::InvalidInput(format!(
                "spline basis needs at least {ORDER} functions, got {n_basis}"
            )));
        }
        if values.len() < 2 {
            return Err(Error::InvalidInput(
                "spline basis needs at least 2 predictor values".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite predictor value".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let lo = sorted[0];
        let hi = *sorted.last().expect("non-empty");
        if !(hi > lo) {
            return Err(Error::InvalidInput(
                "constant predictor: spline basis needs a spread of values".into(),
            ));
        }
        let mut knots = vec![lo; ORDER];
        let target_interior = n_basis - ORDER;
        for i in 1..=target_interior {
            let level = i as f64 / (n_basis - 3) as f64;
            let t = quantile_sorted(&sorted, S::cast(level));
            if t > *knots.last().expect("non-empty") && t < hi {
                knots.push(t);
            }
        }
        knots.extend(std::iter::repeat(hi).take(ORDER));
        Ok(BSplineBasis { knots })
    }

    /// Rebuilds a basis from a stored knot vector (used when loading fits).
    pub fn from_knots(knots: Vec<S>) -> Result<Self> {
        if knots.len() < 2 * ORDER {
            return Err(Error::InvalidInput(
                "knot vector too short for a cubic basis".into(),
            ));
        }
        let m = knots.len();
        let lo = knots[0];
        let hi = knots[m - 1];
        if !(hi > lo) || knots.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("invalid knot range".into()));
        }
        if knots[..ORDER].iter().any(|&t| t != lo) || knots[m - ORDER..].iter().any(|&t| t != hi) {
            return Err(Error::InvalidInput(
                "knot vector must be clamped (4-fold boundary knots)".into(),
            ));
        }
        if knots[ORDER - 1..=m - ORDER]
            .windows(2)
            .any(|w| !(w[1] > w[0]))
        {
            return Err(Error::InvalidInput(
                "interior knots must be strictly increasing".into(),
            ));
        }
        Ok(BSplineBasis { knots })
    }

    pub fn n_basis(&self) -> usize {
        self.knots.len() - ORDER
    }

    pub fn knots(&self) -> &[S] {
        &self.knots
    }

    pub fn lo(&self) -> S {
        self.knots[0]
    }

    pub fn hi(&self) -> S {
        *self.knots.last().expect("non-empty")
    }

    /// Largest span index j ∈ [3, n_basis−1] with t[j] ≤ x and t[j] < t[j+1].
    fn span_of(&self, x: S) -> usize {
        let mut span = ORDER - 1;
        for idx in ORDER - 1..self.n_basis() {
            if self.knots[idx] <= x && self.knots[idx] < self.knots[idx + 1] {
                span = idx;
            }
        }
        span
    }

    /// The `ord` nonzero basis values of order `ord` at x within `span`
    /// (functions span−ord+1 ..= span), by the de Boor recursion.
    fn nonzero(&self, x: S, ord: usize, span: usize) -> [S; ORDER] {
        let t = &self.knots;
        let mut n = [S::zero(); ORDER];
        let mut left = [S::zero(); ORDER];
        let mut right = [S::zero(); ORDER];
        n[0] = S::one();
        for r in 1..ord {
            left[r] = x - t[span + 1 - r];
            right[r] = t[span + r] - x;
            let mut saved = S::zero();
            for i in 0..r {
                let denom = right[i + 1] + left[r - i];
                let tmp = if denom > S::zero() {
                    n[i] / denom
                } else {
                    S::zero()
                };
                n[i] = saved + right[i + 1] * tmp;
                saved = left[r - i] * tmp;
            }
            n[r] = saved;
        }
        n
    }

    /// Fills one design row: basis values at x inside [lo, hi], linear
    /// extension b(x0) + b′(x0)(x − x0) beyond.
    pub fn design_row_into(&self, x: S, out: &mut [S]) {
        debug_assert_eq!(out.len(), self.n_basis());
        out.fill(S::zero());
        let lo = self.lo();
        let hi = self.hi();
        if x < lo {
            self.extended_row(lo, x, out);
        } else if x > hi {
            self.extended_row(hi, x, out);
        } else {
            let span = self.span_of(x);
            let vals = self.nonzero(x, ORDER, span);
            for (i, &v) in vals.iter().enumerate() {
                out[span - 3 + i] = v;
            }
        }
    }

    fn extended_row(&self, x0: S, x: S, out: &mut [S]) {
        let span = self.span_of(x0);
        let vals = self.nonzero(x0, ORDER, span);
        let quad = self.nonzero(x0, ORDER - 1, span); // order-3 values, funcs span−2..=span
        let t = &self.knots;
        let dx = x - x0;
        let three = S::cast(3.0);
        let b3 = |m: usize| -> S {
            if m + 2 < span || m > span {
                S::zero()
            } else {
                quad[m - (span - 2)]
            }
        };
        for (i, &v) in vals.iter().enumerate() {
            let k = span - 3 + i;
            let den1 = t[k + 3] - t[k];
            let den2 = t[k + 4] - t[k + 1];
            let term1 = if den1 > S::zero() { b3(k) / den1 } else { S::zero() };
            let term2 = if den2 > S::zero() {
                b3(k + 1) / den2
            } else {
                S::zero()
            };
            out[k] = v + three * (term1 - term2) * dx;
        }
    }

    pub fn design(&self, xs: &[S]) -> Mat<S> {
        let k = self.n_basis();
        let mut m = Mat::zeros(xs.len(), k);
        for (r, &x) in xs.iter().enumerate() {
            self.design_row_into(x, m.row_mut(r));
        }
        m
    }

    /// Greville abscissae ξ_k = (t_{k+1} + t_{k+2} + t_{k+3})/3; the basis
    /// reproduces linear functions as Σ ξ_k B_k(x) = x.
    pub fn greville(&self) -> Vec<S> {
        let three = S::cast(3.0);
        (0..self.n_basis())
            .map(|k| (self.knots[k + 1] + self.knots[k + 2] + self.knots[k + 3]) / three)
            .collect()
    }

    /// Second-order difference penalty P = DᵀD where each row of D is the
    /// second divided difference of the coefficients at consecutive Greville
    /// points, scaled by √(2/(h₁+h₂)); the null space is exactly
    /// {c_k = α + β·ξ_k}, i.e. linear functions are unpenalized.
    pub fn penalty(&self) -> Mat<S> {
        let k = self.n_basis();
        let xi = self.greville();
        let mut p = Mat::zeros(k, k);
        let two = S::cast(2.0);
        for i in 0..k - 2 {
            let h1 = xi[i + 1] - xi[i];
            let h2 = xi[i + 2] - xi[i + 1];
            let scale = (two / (h1 + h2)).sqrt();
            let w = [
                scale / h1,
                -scale * (S::one() / h1 + S::one() / h2),
                scale / h2,
            ];
            for r in 0..3 {
                for c in 0..3 {
                    p[(i + r, i + c)] += w[r] * w[c];
                }
            }
        }
        p
    }
}
