//! Penalized-spline additive regression: one cubic B-spline smooth per
//! predictor, second-order difference penalties, smoothing parameters chosen
//! by generalized cross-validation on a log grid.

use super::basis::BSplineBasis;
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Mat};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GamConfig {
    /// Basis functions per smooth before knot deduplication.
    pub n_basis: usize,
    pub lambda_log10_min: f64,
    pub lambda_log10_max: f64,
    pub lambda_log10_step: f64,
    /// Smoothing-selection passes; within a pass every smooth is updated
    /// against the previous pass's values, so predictor order cannot change
    /// the outcome.
    pub passes: usize,
}

impl Default for GamConfig {
    fn default() -> Self {
        GamConfig {
            n_basis: 20,
            lambda_log10_min: -6.0,
            lambda_log10_max: 6.0,
            lambda_log10_step: 0.5,
            passes: 2,
        }
    }
}

impl GamConfig {
    fn validate(&self) -> Result<()> {
        if self.n_basis < 4 {
            return Err(Error::InvalidInput("n_basis must be ≥ 4".into()));
        }
        if self.passes < 1 {
            return Err(Error::InvalidInput("passes must be ≥ 1".into()));
        }
        if !(self.lambda_log10_step > 0.0) || self.lambda_log10_max < self.lambda_log10_min {
            return Err(Error::InvalidInput("invalid smoothing grid".into()));
        }
        Ok(())
    }

    fn lambda_grid<S: Scalar>(&self) -> Vec<S> {
        let mut grid = Vec::new();
        let mut exp = self.lambda_log10_min;
        while exp <= self.lambda_log10_max + 1e-9 {
            grid.push(S::cast(10f64.powf(exp)));
            exp += self.lambda_log10_step;
        }
        grid
    }
}

/// One fitted smooth: g(x) = Σ_k coefficients[k]·(b_k(x) − basis_means[k]),
/// which has mean zero over the training inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineSmooth<S> {
    pub knots: Vec<S>,
    pub coefficients: Vec<S>,
    pub basis_means: Vec<S>,
    pub smoothing_parameter: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GamFit<S> {
    pub intercept: S,
    pub smooths: Vec<SplineSmooth<S>>,
    pub predictor_spec: Vec<String>,
    pub train_rmse: S,
    pub edf: S,
    pub gcv: S,
}

struct SmoothBlock<S> {
    basis: BSplineBasis<S>,
    z: Mat<S>,
    penalty: Mat<S>,
    means: Vec<S>,
    offset: usize,
    width: usize,
}

/// Orthonormal basis of {v : 1ᵀv = 0} via the Householder reflection that
/// maps e₁ to the direction of 1.
fn sum_to_zero_basis<S: Scalar>(k: usize) -> Mat<S> {
    let mut v = vec![S::one(); k];
    v[0] += S::cast_usize(k).sqrt();
    let vtv: S = v.iter().map(|&x| x * x).sum();
    let two = S::cast(2.0);
    let mut z = Mat::zeros(k, k - 1);
    for r in 0..k {
        for c in 0..k - 1 {
            let h = if r == c + 1 { S::one() } else { S::zero() };
            z[(r, c)] = h - two * v[r] * v[c + 1] / vtv;
        }
    }
    z
}

fn build_blocks<S: Scalar>(
    predictors: &Mat<S>,
    cfg: &GamConfig,
) -> Result<(Vec<SmoothBlock<S>>, Mat<S>)> {
    let n = predictors.nrows();
    let m = predictors.ncols();
    let mut blocks = Vec::with_capacity(m);
    let mut offset = 1; // column 0 is the intercept
    let mut designs = Vec::with_capacity(m);
    for j in 0..m {
        let col = predictors.column(j);
        let basis = BSplineBasis::from_values(&col, cfg.n_basis)?;
        let k = basis.n_basis();
        let mut b = basis.design(&col);
        let means: Vec<S> = (0..k)
            .map(|c| b.column(c).iter().copied().sum::<S>() / S::cast_usize(n))
            .collect();
        for r in 0..n {
            let row = b.row_mut(r);
            for (c, &mean) in means.iter().enumerate() {
                row[c] -= mean;
            }
        }
        let z = sum_to_zero_basis::<S>(k);
        let design = b.matmul(&z);
        let penalty = z.transpose().matmul(&basis.penalty()).matmul(&z);
        let width = k - 1;
        blocks.push(SmoothBlock {
            basis,
            z,
            penalty,
            means,
            offset,
            width,
        });
        designs.push(design);
        offset += width;
    }
    let p = offset;
    let mut x = Mat::zeros(n, p);
    for r in 0..n {
        x[(r, 0)] = S::one();
    }
    for (block, design) in blocks.iter().zip(&designs) {
        for r in 0..n {
            let row = x.row_mut(r);
            for c in 0..block.width {
                row[block.offset + c] = design[(r, c)];
            }
        }
    }
    Ok((blocks, x))
}

struct SolveOut<S> {
    beta: Vec<S>,
    rss: S,
    edf: S,
    gcv: S,
}

fn solve_at<S: Scalar>(
    x: &Mat<S>,
    xtx: &Mat<S>,
    xty: &[S],
    y: &[S],
    blocks: &[SmoothBlock<S>],
    lambdas: &[S],
) -> Result<SolveOut<S>> {
    let n = x.nrows();
    let mut a = xtx.clone();
    for (block, &lambda) in blocks.iter().zip(lambdas) {
        for r in 0..block.width {
            for c in 0..block.width {
                a[(block.offset + r, block.offset + c)] += lambda * block.penalty[(r, c)];
            }
        }
    }
    let chol = Cholesky::factor(&a)?;
    let beta = chol.solve_vec(xty);
    let fitted = x.mul_vec(&beta);
    let rss: S = y
        .iter()
        .zip(&fitted)
        .map(|(&yi, &fi)| (yi - fi) * (yi - fi))
        .sum();
    let influence = chol.solve_mat(xtx);
    let edf = influence.trace();
    let denom = S::cast_usize(n) - edf;
    let gcv = if denom > S::cast(1e-6) {
        S::cast_usize(n) * rss / (denom * denom)
    } else {
        S::infinity()
    };
    Ok(SolveOut {
        beta,
        rss,
        edf,
        gcv,
    })
}

fn pack_fit<S: Scalar>(
    blocks: Vec<SmoothBlock<S>>,
    names: &[String],
    lambdas: &[S],
    out: SolveOut<S>,
    n: usize,
) -> GamFit<S> {
    let smooths = blocks
        .into_iter()
        .zip(lambdas)
        .map(|(block, &lambda)| {
            let tilde = &out.beta[block.offset..block.offset + block.width];
            let coefficients = block.z.mul_vec(tilde);
            SplineSmooth {
                knots: block.basis.knots().to_vec(),
                coefficients,
                basis_means: block.means,
                smoothing_parameter: lambda,
            }
        })
        .collect();
    GamFit {
        intercept: out.beta[0],
        smooths,
        predictor_spec: names.to_vec(),
        train_rmse: (out.rss / S::cast_usize(n)).max(S::zero()).sqrt(),
        edf: out.edf,
        gcv: out.gcv,
    }
}

/// Fits the additive model target = β₀ + Σ_j g_j(predictor_j) by penalized
/// least squares; each smoothing parameter is selected by GCV on a log₁₀
/// grid, sweeping the smooths for `cfg.passes` synchronized passes.
pub fn fit_gam<S: Scalar>(
    predictors: &Mat<S>,
    target: &[S],
    names: &[String],
    cfg: &GamConfig,
) -> Result<GamFit<S>> {
    cfg.validate()?;
    let n = predictors.nrows();
    let m = predictors.ncols();
    if m == 0 {
        return Err(Error::InvalidInput("no predictors".into()));
    }
    if names.len() != m {
        return Err(Error::InvalidInput(format!(
            "{} predictor names for {m} predictors",
            names.len()
        )));
    }
    if target.len() != n {
        return Err(Error::InvalidInput(format!(
            "{} targets for {n} predictor rows",
            target.len()
        )));
    }
    if target.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite target value".into()));
    }
    let (blocks, x) = build_blocks(predictors, cfg)?;
    let p = x.ncols();
    if n < p {
        return Err(Error::InvalidInput(format!(
            "need at least as many rows as basis dimension: n={n} < {p}"
        )));
    }
    let xtx = x.gram();
    let xty = x.tr_mul_vec(target);

    let grid = cfg.lambda_grid::<S>();
    let mut lambdas = vec![S::one(); m];
    for _ in 0..cfg.passes {
        let previous = lambdas.clone();
        for j in 0..m {
            let mut best: Option<(S, S)> = None; // (gcv, lambda)
            for &lambda in &grid {
                let mut trial = previous.clone();
                trial[j] = lambda;
                if let Ok(sol) = solve_at(&x, &xtx, &xty, target, &blocks, &trial) {
                    if best.map_or(true, |(g, _)| sol.gcv < g) {
                        best = Some((sol.gcv, lambda));
                    }
                }
            }
            if let Some((_, lambda)) = best {
                lambdas[j] = lambda;
            }
        }
    }

    let out = solve_at(&x, &xtx, &xty, target, &blocks, &lambdas).map_err(|e| {
        Error::Numerical(format!(
            "penalized least-squares system is rank deficient ({e}); \
             predictors may be collinear"
        ))
    })?;
    Ok(pack_fit(blocks, names, &lambdas, out, n))
}

impl<S: Scalar> GamFit<S> {
    pub fn n_predictors(&self) -> usize {
        self.smooths.len()
    }

    /// Predicts every row; rows must have one column per smooth, in
    /// predictor_spec order.
    pub fn predict(&self, rows: &Mat<S>) -> Result<Vec<S>> {
        if rows.ncols() != self.smooths.len() {
            return Err(Error::InvalidInput(format!(
                "{} predictor columns for a model with {} smooths",
                rows.ncols(),
                self.smooths.len()
            )));
        }
        let bases: Vec<BSplineBasis<S>> = self
            .smooths
            .iter()
            .map(|s| BSplineBasis::from_knots(s.knots.clone()))
            .collect::<Result<_>>()?;
        let mut out = Vec::with_capacity(rows.nrows());
        let mut buf: Vec<S> = Vec::new();
        for r in 0..rows.nrows() {
            let mut acc = self.intercept;
            for (j, (smooth, basis)) in self.smooths.iter().zip(&bases).enumerate() {
                buf.resize(basis.n_basis(), S::zero());
                basis.design_row_into(rows[(r, j)], &mut buf);
                for ((&b, &mean), &c) in buf
                    .iter()
                    .zip(&smooth.basis_means)
                    .zip(&smooth.coefficients)
                {
                    acc += (b - mean) * c;
                }
            }
            out.push(acc);
        }
        Ok(out)
    }

    pub fn predict_row(&self, row: &[S]) -> Result<S> {
        let m = Mat::from_rows(&[row.to_vec()])?;
        Ok(self.predict(&m)?[0])
    }

    pub fn validate(&self) -> Result<()> {
        if self.smooths.len() != self.predictor_spec.len() {
            return Err(Error::InvalidInput(
                "smooth count must match predictor_spec".into(),
            ));
        }
        for s in &self.smooths {
            let basis = BSplineBasis::from_knots(s.knots.clone())?;
            if s.coefficients.len() != basis.n_basis() || s.basis_means.len() != basis.n_basis() {
                return Err(Error::InvalidInput(
                    "smooth coefficient count must match basis dimension".into(),
                ));
            }
            if !(s.smoothing_parameter >= S::zero()) {
                return Err(Error::InvalidInput(
                    "smoothing parameter must be ≥ 0".into(),
                ));
            }
        }
        Ok(())
    }
}
