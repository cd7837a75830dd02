//! Small dense matrix helpers: row-major storage, Cholesky solves, and a
//! cyclic Jacobi eigensolver for symmetric matrices. Sized for the moderate
//! dimensions this crate needs (spline design crosses, correlation matrices),
//! not for general-purpose linear algebra.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat<S> {
    nrows: usize,
    ncols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Mat {
            nrows,
            ncols,
            data: vec![S::zero(); nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::InvalidInput("matrix must be non-empty".into()));
        }
        let ncols = rows[0].len();
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::InvalidInput("ragged matrix rows".into()));
        }
        Ok(Mat {
            nrows: rows.len(),
            ncols,
            data: rows.iter().flatten().cloned().collect(),
        })
    }

    /// Builds a matrix from column vectors.
    pub fn from_columns(cols: &[Vec<S>]) -> Result<Self> {
        if cols.is_empty() || cols[0].is_empty() {
            return Err(Error::InvalidInput("matrix must be non-empty".into()));
        }
        let nrows = cols[0].len();
        if cols.iter().any(|c| c.len() != nrows) {
            return Err(Error::InvalidInput("ragged matrix columns".into()));
        }
        let mut m = Mat::zeros(nrows, cols.len());
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    /// Builds a matrix from a row-major flat buffer.
    pub fn from_vec(nrows: usize, ncols: usize, data: Vec<S>) -> Result<Self> {
        if nrows == 0 || ncols == 0 || data.len() != nrows * ncols {
            return Err(Error::InvalidInput(format!(
                "{} values cannot fill a {nrows}×{ncols} matrix",
                data.len()
            )));
        }
        Ok(Mat { nrows, ncols, data })
    }

    /// Row-major flat view of the entries.
    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn column(&self, j: usize) -> Vec<S> {
        (0..self.nrows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Mat<S> {
        let mut t = Mat::zeros(self.ncols, self.nrows);
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Mat<S>) -> Mat<S> {
        assert_eq!(self.ncols, rhs.nrows, "matmul dimension mismatch");
        let mut out = Mat::zeros(self.nrows, rhs.ncols);
        for i in 0..self.nrows {
            for k in 0..self.ncols {
                let aik = self[(i, k)];
                if aik == S::zero() {
                    continue;
                }
                for j in 0..rhs.ncols {
                    out[(i, j)] += aik * rhs[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(self.ncols, v.len(), "mul_vec dimension mismatch");
        (0..self.nrows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .map(|(&a, &b)| a * b)
                    .sum::<S>()
            })
            .collect()
    }

    /// AᵀA of this matrix (symmetric, computed once per pair).
    pub fn gram(&self) -> Mat<S> {
        let mut g = Mat::zeros(self.ncols, self.ncols);
        for i in 0..self.nrows {
            let row = self.row(i);
            for a in 0..self.ncols {
                let ra = row[a];
                if ra == S::zero() {
                    continue;
                }
                for b in a..self.ncols {
                    g[(a, b)] += ra * row[b];
                }
            }
        }
        for a in 0..self.ncols {
            for b in 0..a {
                g[(a, b)] = g[(b, a)];
            }
        }
        g
    }

    /// Aᵀy.
    pub fn tr_mul_vec(&self, y: &[S]) -> Vec<S> {
        assert_eq!(self.nrows, y.len(), "tr_mul_vec dimension mismatch");
        let mut out = vec![S::zero(); self.ncols];
        for i in 0..self.nrows {
            let yi = y[i];
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * yi;
            }
        }
        out
    }

    pub fn add_assign(&mut self, rhs: &Mat<S>) {
        assert_eq!(self.nrows, rhs.nrows);
        assert_eq!(self.ncols, rhs.ncols);
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: S) {
        for a in self.data.iter_mut() {
            *a *= s;
        }
    }

    pub fn trace(&self) -> S {
        (0..self.nrows.min(self.ncols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_symmetric(&self, tol: S) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        for i in 0..self.nrows {
            for j in (i + 1)..self.ncols {
                if (self[(i, j)] - self[(j, i)]).abs() > tol {
                    return false;
                }
            }
        }
        true
    }
}

impl<S: Scalar> std::ops::Index<(usize, usize)> for Mat<S> {
    type Output = S;
    fn index(&self, (i, j): (usize, usize)) -> &S {
        debug_assert!(i < self.nrows && j < self.ncols);
        &self.data[i * self.ncols + j]
    }
}

impl<S: Scalar> std::ops::IndexMut<(usize, usize)> for Mat<S> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        debug_assert!(i < self.nrows && j < self.ncols);
        &mut self.data[i * self.ncols + j]
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub struct Cholesky<S> {
    l: Mat<S>,
}

impl<S: Scalar> Cholesky<S> {
    /// Factors a symmetric positive-definite matrix. Pivots at or below a
    /// small multiple of machine epsilon relative to the largest diagonal
    /// entry are treated as zero, so exactly singular systems (for example
    /// duplicated design columns) fail instead of dividing by rounding noise;
    /// callers surface the failure as a rank-deficiency diagnostic.
    pub fn factor(a: &Mat<S>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::InvalidInput("cholesky needs a square matrix".into()));
        }
        let n = a.nrows();
        let max_diag = (0..n).fold(S::zero(), |m, i| m.max(a[(i, i)].abs()));
        let pivot_floor = max_diag * S::epsilon() * S::cast(1024.0);
        let mut l = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[(i, j)];
                for k in 0..j {
                    sum -= l[(i, k)] * l[(j, k)];
                }
                if i == j {
                    if sum <= pivot_floor || !sum.is_finite() {
                        return Err(Error::Numerical(format!(
                            "matrix is not positive definite (pivot {i} = {sum})"
                        )));
                    }
                    l[(i, j)] = sum.sqrt();
                } else {
                    l[(i, j)] = sum / l[(j, j)];
                }
            }
        }
        Ok(Cholesky { l })
    }

    pub fn solve_vec(&self, b: &[S]) -> Vec<S> {
        let n = self.l.nrows();
        assert_eq!(b.len(), n);
        // forward substitution L z = b
        let mut z = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                let lik = self.l[(i, k)];
                z[i] = z[i] - lik * z[k];
            }
            z[i] = z[i] / self.l[(i, i)];
        }
        // back substitution Lᵀ x = z
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let lki = self.l[(k, i)];
                z[i] = z[i] - lki * z[k];
            }
            z[i] = z[i] / self.l[(i, i)];
        }
        z
    }

    pub fn solve_mat(&self, b: &Mat<S>) -> Mat<S> {
        assert_eq!(b.nrows(), self.l.nrows());
        let cols: Vec<Vec<S>> = (0..b.ncols()).map(|j| self.solve_vec(&b.column(j))).collect();
        Mat::from_columns(&cols).expect("solve_mat preserves shape")
    }

    /// log determinant of the factored matrix.
    pub fn log_det(&self) -> S {
        let two = S::cast(2.0);
        (0..self.l.nrows()).map(|i| self.l[(i, i)].ln() * two).sum()
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order with matching eigenvector columns.
pub fn sym_eigen<S: Scalar>(a: &Mat<S>, max_sweeps: usize) -> Result<(Vec<S>, Mat<S>)> {
    if !a.is_symmetric(S::cast(1e-8)) {
        return Err(Error::InvalidInput("eigendecomposition needs a symmetric matrix".into()));
    }
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = Mat::<S>::identity(n);
    let tol = S::cast(1e-14);
    for _ in 0..max_sweeps {
        let mut off = S::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() <= tol * S::cast_usize(n) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= S::cast(1e-300) {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (S::cast(2.0) * apq);
                let t = if theta >= S::zero() {
                    S::one() / (theta + (S::one() + theta * theta).sqrt())
                } else {
                    -S::one() / (-theta + (S::one() + theta * theta).sqrt())
                };
                let c = S::one() / (S::one() + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].partial_cmp(&m[(i, i)]).expect("finite eigenvalues"));
    let values: Vec<S> = order.iter().map(|&i| m[(i, i)]).collect();
    let vec_cols: Vec<Vec<S>> = order.iter().map(|&i| v.column(i)).collect();
    Ok((values, Mat::from_columns(&vec_cols)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_known_system() {
        // A = [[4,2],[2,3]], b = [2,1]; solution x = A⁻¹ b = [0.5, 0]
        let a = Mat::from_rows(&[vec![4.0f64, 2.0], vec![2.0, 3.0]]).unwrap();
        let ch = Cholesky::factor(&a).unwrap();
        let x = ch.solve_vec(&[2.0, 1.0]);
        assert!((x[0] - 0.5).abs() < 1e-14);
        assert!(x[1].abs() < 1e-14);
    }

    #[test]
    fn cholesky_rejects_indefinite_matrix() {
        let a = Mat::from_rows(&[vec![1.0f64, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(Cholesky::factor(&a).is_err());
    }

    #[test]
    fn jacobi_recovers_planted_spectrum() {
        // Diagonalize Q diag(5,2,1) Qᵀ for a known rotation Q.
        let c = 0.6f64;
        let s = 0.8f64;
        let q = Mat::from_rows(&[vec![c, -s, 0.0], vec![s, c, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let d = Mat::from_rows(&[
            vec![5.0, 0.0, 0.0],
            vec![0.0, 2.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let a = q.matmul(&d).matmul(&q.transpose());
        let (vals, vecs) = sym_eigen(&a, 50).unwrap();
        assert!((vals[0] - 5.0).abs() < 1e-10);
        assert!((vals[1] - 2.0).abs() < 1e-10);
        assert!((vals[2] - 1.0).abs() < 1e-10);
        // A v = λ v for each column
        for k in 0..3 {
            let v = vecs.column(k);
            let av = a.mul_vec(&v);
            for i in 0..3 {
                assert!((av[i] - vals[k] * v[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gram_matches_explicit_transpose_product() {
        let x = Mat::from_rows(&[vec![1.0f64, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let g = x.gram();
        let explicit = x.transpose().matmul(&x);
        for i in 0..2 {
            for j in 0..2 {
                assert!((g[(i, j)] - explicit[(i, j)]).abs() < 1e-12);
            }
        }
    }
}
