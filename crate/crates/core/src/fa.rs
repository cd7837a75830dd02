//! Minimum-residual factor analysis of correlation matrices, explained
//! variance accounting, and regularized generalized-least-squares factor
//! scores. Solutions are unrotated; with one factor rotation is vacuous.

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, Cholesky, Mat};
use crate::optim::{minimize, OptimOptions};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// Smallest uniqueness admitted when inverting Ψ for factor scoring.
const PSI_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorFit<S> {
    /// d×l loading matrix A; each factor's largest-|loading| entry is
    /// positive.
    pub loadings: Mat<S>,
    /// Diagonal of Ψ (length d), clipped at 0.
    pub uniquenesses: Vec<S>,
    pub n_factors: usize,
    /// Sum of squared off-diagonal residuals of corr − AAᵀ (the minimized
    /// objective at the solution).
    pub residual_ss: S,
    /// Variable means subtracted before scoring; zero unless set via
    /// [`FactorFit::with_means`].
    pub mu: Vec<S>,
    /// True when a uniqueness came out negative (a Heywood case) and was
    /// clipped to 0.
    pub heywood: bool,
}

impl<S: Scalar> FactorFit<S> {
    pub fn n_variables(&self) -> usize {
        self.loadings.nrows()
    }

    /// Replaces the scoring means (defaults to zeros, which is correct for
    /// inputs that were already standardized).
    pub fn with_means(mut self, mu: Vec<S>) -> Result<Self> {
        if mu.len() != self.n_variables() {
            return Err(Error::InvalidInput(format!(
                "{} means for {} variables",
                mu.len(),
                self.n_variables()
            )));
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInput("non-finite variable mean".into()));
        }
        self.mu = mu;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.n_variables();
        if self.loadings.ncols() != self.n_factors || self.n_factors == 0 {
            return Err(Error::InvalidInput(
                "loading matrix does not match the factor count".into(),
            ));
        }
        if self.uniquenesses.len() != d || self.mu.len() != d {
            return Err(Error::InvalidInput(
                "uniqueness/mean length does not match the variable count".into(),
            ));
        }
        if self.uniquenesses.iter().any(|&p| !(p >= S::zero())) {
            return Err(Error::InvalidInput("negative uniqueness".into()));
        }
        Ok(())
    }
}

fn check_correlation<S: Scalar>(corr: &Mat<S>) -> Result<()> {
    let d = corr.nrows();
    if corr.ncols() != d || d == 0 {
        return Err(Error::InvalidInput(format!(
            "correlation matrix must be square, got {d}×{}",
            corr.ncols()
        )));
    }
    let tol = S::cast(1e-8);
    if !corr.is_symmetric(tol) {
        return Err(Error::InvalidInput(
            "correlation matrix is not symmetric".into(),
        ));
    }
    for i in 0..d {
        if (corr[(i, i)] - S::one()).abs() > tol {
            return Err(Error::InvalidInput(format!(
                "correlation matrix diagonal entry {i} is {}, expected 1",
                corr[(i, i)]
            )));
        }
        for j in 0..d {
            if !corr[(i, j)].is_finite() || corr[(i, j)].abs() > S::one() + tol {
                return Err(Error::InvalidInput(format!(
                    "correlation entry ({i}, {j}) = {} is outside [−1, 1]",
                    corr[(i, j)]
                )));
            }
        }
    }
    Ok(())
}

/// Principal-axis starting loadings: eigenvectors of the correlation matrix
/// with its diagonal replaced by max-|r| communality estimates, scaled by the
/// square roots of the leading eigenvalues (clamped away from zero so no
/// start column is an exact stationary point).
fn principal_axis_start<S: Scalar>(corr: &Mat<S>, l: usize) -> Result<Mat<S>> {
    let d = corr.nrows();
    let mut adjusted = corr.clone();
    for i in 0..d {
        let mut h = S::zero();
        for j in 0..d {
            if j != i {
                h = h.max(corr[(i, j)].abs());
            }
        }
        adjusted[(i, i)] = h;
    }
    let (eigenvalues, vectors) = sym_eigen(&adjusted, 100)?;
    let mut start = Mat::<S>::zeros(d, l);
    for k in 0..l {
        let scale = eigenvalues[k].max(S::cast(1e-2)).sqrt();
        for i in 0..d {
            start[(i, k)] = vectors[(i, k)] * scale;
        }
    }
    Ok(start)
}

fn off_diagonal_residual_ss<S: Scalar>(corr: &Mat<S>, loadings: &Mat<S>) -> S {
    let d = corr.nrows();
    let l = loadings.ncols();
    let mut ss = S::zero();
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            let mut fitted = S::zero();
            for k in 0..l {
                fitted += loadings[(i, k)] * loadings[(j, k)];
            }
            let e = corr[(i, j)] - fitted;
            ss += e * e;
        }
    }
    ss
}

/// Minres factor analysis: finds loadings minimizing the summed squares of
/// the off-diagonal elements of corr − AAᵀ by quasi-Newton descent from a
/// principal-axis start, then sets Ψ = diag(corr − AAᵀ) clipped at 0.
pub fn fit_minres<S: Scalar>(corr: &Mat<S>, l: usize) -> Result<FactorFit<S>> {
    check_correlation(corr)?;
    let d = corr.nrows();
    if l == 0 {
        return Err(Error::InvalidInput("factor count must be at least 1".into()));
    }
    if l >= d {
        return Err(Error::InvalidInput(format!(
            "{l} factors for {d} variables; the factor count must be smaller"
        )));
    }
    let start = principal_axis_start(corr, l)?;
    let objective = |x: &[S], grad: &mut [S]| -> S {
        // x is A in row-major d×l layout; e_ij = r_ij − Σ_k a_ik a_jk.
        let a = |i: usize, k: usize| x[i * l + k];
        let mut value = S::zero();
        for g in grad.iter_mut() {
            *g = S::zero();
        }
        for i in 0..d {
            for j in 0..d {
                if i == j {
                    continue;
                }
                let mut fitted = S::zero();
                for k in 0..l {
                    fitted += a(i, k) * a(j, k);
                }
                let e = corr[(i, j)] - fitted;
                value += e * e;
                // ∂/∂a_ik of Σ_{i≠j} e_ij² collects −4 e_ij a_jk over j≠i;
                // accumulating −2 e a_jk here for both orderings (i,j) and
                // (j,i) yields exactly that.
                for k in 0..l {
                    grad[i * l + k] -= S::cast(2.0) * e * a(j, k);
                }
            }
        }
        value
    };
    let opts = OptimOptions {
        max_iterations: 1000,
        gradient_tolerance: S::cast(1e-10),
    };
    let solution = minimize(objective, start.data(), &opts);
    let mut loadings = Mat::from_vec(d, l, solution.x)?;

    // Sign convention: each factor's largest-|loading| entry is positive.
    for k in 0..l {
        let mut anchor = 0;
        for i in 1..d {
            if loadings[(i, k)].abs() > loadings[(anchor, k)].abs() {
                anchor = i;
            }
        }
        if loadings[(anchor, k)] < S::zero() {
            for i in 0..d {
                loadings[(i, k)] = -loadings[(i, k)];
            }
        }
    }

    let mut heywood = false;
    let mut uniquenesses = Vec::with_capacity(d);
    for i in 0..d {
        let mut communality = S::zero();
        for k in 0..l {
            communality += loadings[(i, k)] * loadings[(i, k)];
        }
        let psi = corr[(i, i)] - communality;
        if psi < -S::cast(1e-8) {
            heywood = true;
        }
        uniquenesses.push(psi.max(S::zero()));
    }
    let residual_ss = off_diagonal_residual_ss(corr, &loadings);
    Ok(FactorFit {
        loadings,
        uniquenesses,
        n_factors: l,
        residual_ss,
        mu: vec![S::zero(); d],
        heywood,
    })
}

/// Proportion of total variance attributed to each factor:
/// Σ_j A_jk² / sigma_trace.
pub fn explained_variance<S: Scalar>(fit: &FactorFit<S>, sigma_trace: S) -> Result<Vec<S>> {
    fit.validate()?;
    if !(sigma_trace > S::zero()) {
        return Err(Error::InvalidInput(format!(
            "trace {sigma_trace} must be positive"
        )));
    }
    let d = fit.n_variables();
    Ok((0..fit.n_factors)
        .map(|k| {
            let mut ss = S::zero();
            for i in 0..d {
                ss += fit.loadings[(i, k)] * fit.loadings[(i, k)];
            }
            ss / sigma_trace
        })
        .collect())
}

/// Regularized generalized-least-squares factor scores:
/// ẑ = (AᵀΨ⁻¹A + λI)⁻¹ AᵀΨ⁻¹ (x − μ), with Ψ entries floored at 1e-6.
pub fn factor_scores<S: Scalar>(fit: &FactorFit<S>, x: &[S], lambda: S) -> Result<Vec<S>> {
    fit.validate()?;
    let d = fit.n_variables();
    let l = fit.n_factors;
    if x.len() != d {
        return Err(Error::InvalidInput(format!(
            "{} observations for {d} variables",
            x.len()
        )));
    }
    if !(lambda >= S::zero()) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!(
            "regularization {lambda} must be a finite nonnegative number"
        )));
    }
    let floor = S::cast(PSI_FLOOR);
    let inv_psi: Vec<S> = fit
        .uniquenesses
        .iter()
        .map(|&p| S::one() / p.max(floor))
        .collect();

    let mut system = Mat::<S>::zeros(l, l);
    for p in 0..l {
        for q in 0..l {
            let mut s = S::zero();
            for i in 0..d {
                s += fit.loadings[(i, p)] * inv_psi[i] * fit.loadings[(i, q)];
            }
            system[(p, q)] = s;
        }
        system[(p, p)] += lambda;
    }
    let mut rhs = vec![S::zero(); l];
    for (p, r) in rhs.iter_mut().enumerate() {
        let mut s = S::zero();
        for i in 0..d {
            s += fit.loadings[(i, p)] * inv_psi[i] * (x[i] - fit.mu[i]);
        }
        *r = s;
    }
    let chol = Cholesky::factor(&system).map_err(|_| {
        if lambda == S::zero() {
            Error::Numerical(
                "factor-score system is singular at lambda = 0; use lambda > 0".into(),
            )
        } else {
            Error::Numerical("factor-score system is not positive definite".into())
        }
    })?;
    Ok(chol.solve_vec(&rhs))
}
