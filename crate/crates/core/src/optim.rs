//! BFGS quasi-Newton optimization for the small smooth problems in this
//! crate (per-item M-steps, minres factor loadings). Dense inverse-Hessian
//! updates with Armijo backtracking; dimensions here are tiny, so the O(n²)
//! update cost is irrelevant.

use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct OptimOptions<S> {
    pub max_iterations: usize,
    pub gradient_tolerance: S,
}

impl<S: Scalar> Default for OptimOptions<S> {
    fn default() -> Self {
        OptimOptions {
            max_iterations: 100,
            gradient_tolerance: S::cast(1e-8),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult<S> {
    pub x: Vec<S>,
    pub value: S,
    pub gradient_norm: S,
    pub iterations: usize,
    pub converged: bool,
}

fn inf_norm<S: Scalar>(v: &[S]) -> S {
    v.iter().fold(S::zero(), |m, &x| m.max(x.abs()))
}

/// Minimizes `f`; the closure returns the value and writes the gradient.
/// Non-finite trial values are treated as +∞ (the step is rejected), so
/// objectives with log-barriers are safe. The result never has a larger
/// value than `f(x0)`.
pub fn minimize<S, F>(mut f: F, x0: &[S], opts: &OptimOptions<S>) -> OptimResult<S>
where
    S: Scalar,
    F: FnMut(&[S], &mut [S]) -> S,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![S::zero(); n];
    let mut value = f(&x, &mut g);
    // inverse Hessian approximation, dense
    let mut h = vec![S::zero(); n * n];
    let reset_h = |h: &mut Vec<S>| {
        for v in h.iter_mut() {
            *v = S::zero();
        }
        for i in 0..n {
            h[i * n + i] = S::one();
        }
    };
    reset_h(&mut h);

    let c1 = S::cast(1e-4);
    let mut iterations = 0;
    let mut converged = inf_norm(&g) <= opts.gradient_tolerance;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        // direction d = −H g
        let mut d = vec![S::zero(); n];
        for i in 0..n {
            let mut acc = S::zero();
            for j in 0..n {
                acc += h[i * n + j] * g[j];
            }
            d[i] = -acc;
        }
        let mut slope: S = d.iter().zip(&g).map(|(&di, &gi)| di * gi).sum();
        if slope >= S::zero() {
            // not a descent direction; restart from steepest descent
            reset_h(&mut h);
            for (di, &gi) in d.iter_mut().zip(&g) {
                *di = -gi;
            }
            slope = -g.iter().map(|&gi| gi * gi).sum::<S>();
        }

        // Armijo backtracking
        let mut step = S::one();
        let mut accepted = false;
        let mut x_new = vec![S::zero(); n];
        let mut g_new = vec![S::zero(); n];
        let mut value_new = value;
        for _ in 0..40 {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            let v = f(&x_new, &mut g_new);
            if v.is_finite() && v <= value + c1 * step * slope {
                value_new = v;
                accepted = true;
                break;
            }
            step = step * S::cast(0.5);
        }
        if !accepted {
            break;
        }

        // BFGS update of the inverse Hessian
        let s: Vec<S> = x_new.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y: Vec<S> = g_new.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy: S = s.iter().zip(&y).map(|(&a, &b)| a * b).sum();
        let s_norm = inf_norm(&s);
        let y_norm = inf_norm(&y);
        if sy > S::cast(1e-12) * s_norm * y_norm && sy > S::zero() {
            let rho = S::one() / sy;
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ
            let mut hy = vec![S::zero(); n];
            for i in 0..n {
                let mut acc = S::zero();
                for j in 0..n {
                    acc += h[i * n + j] * y[j];
                }
                hy[i] = acc;
            }
            let yhy: S = y.iter().zip(&hy).map(|(&a, &b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    let upd = h[i * n + j] - rho * (s[i] * hy[j] + hy[i] * s[j])
                        + rho * rho * yhy * s[i] * s[j]
                        + rho * s[i] * s[j];
                    h[i * n + j] = upd;
                }
            }
        }

        x = x_new;
        g = g_new;
        value = value_new;
        converged = inf_norm(&g) <= opts.gradient_tolerance || inf_norm(&s) <= S::cast(1e-12);
    }

    OptimResult {
        gradient_norm: inf_norm(&g),
        x,
        value,
        iterations,
        converged,
    }
}

/// Maximizes `f` by minimizing its negation; gradients are of `f` itself.
pub fn maximize<S, F>(mut f: F, x0: &[S], opts: &OptimOptions<S>) -> OptimResult<S>
where
    S: Scalar,
    F: FnMut(&[S], &mut [S]) -> S,
{
    let mut res = minimize(
        |x: &[S], g: &mut [S]| {
            let v = f(x, g);
            for gi in g.iter_mut() {
                *gi = -*gi;
            }
            -v
        },
        x0,
        opts,
    );
    res.value = -res.value;
    res
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic_exactly() {
        // f(x) = (x0−3)² + 2(x1+1)²
        let res = minimize(
            |x: &[f64], g: &mut [f64]| {
                g[0] = 2.0 * (x[0] - 3.0);
                g[1] = 4.0 * (x[1] + 1.0);
                (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2)
            },
            &[0.0, 0.0],
            &OptimOptions::default(),
        );
        assert!(res.converged);
        assert!((res.x[0] - 3.0).abs() < 1e-6);
        assert!((res.x[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn minimizes_rosenbrock() {
        let res = minimize(
            |x: &[f64], g: &mut [f64]| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            },
            &[-1.2, 1.0],
            &OptimOptions {
                max_iterations: 500,
                gradient_tolerance: 1e-10,
            },
        );
        assert!((res.x[0] - 1.0).abs() < 1e-5, "x = {:?}", res.x);
        assert!((res.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn never_increases_the_objective() {
        // start at the optimum of a well-behaved function: stays put
        let res = minimize(
            |x: &[f64], g: &mut [f64]| {
                g[0] = 2.0 * x[0];
                x[0] * x[0]
            },
            &[0.0],
            &OptimOptions::default(),
        );
        assert_eq!(res.value, 0.0);
        assert!(res.converged);
    }
}
