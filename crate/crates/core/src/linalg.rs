//! Small dense linear algebra on row-major `Vec<f64>` matrices.
//!
//! Sized for the synthetic test problems (dimension in the tens); nothing here
//! is blocked or vectorised.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `y = A x` for an `rows x cols` matrix.
pub fn matvec(a: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    (0..rows).map(|i| dot(&a[i * cols..(i + 1) * cols], x)).collect()
}

/// `y += A^T v` for an `rows x cols` matrix.
pub fn add_matvec_t(a: &[f64], rows: usize, cols: usize, v: &[f64], y: &mut [f64]) {
    for i in 0..rows {
        let row = &a[i * cols..(i + 1) * cols];
        let vi = v[i];
        for (yj, aij) in y.iter_mut().zip(row) {
            *yj += aij * vi;
        }
    }
}

/// `A B` for `A: m x k`, `B: k x n`.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for l in 0..k {
            let ail = a[i * k + l];
            for j in 0..n {
                out[i * n + j] += ail * b[l * n + j];
            }
        }
    }
    out
}

/// `A^T A` for `A: rows x cols`.
pub fn gram(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols * cols];
    for r in 0..rows {
        let row = &a[r * cols..(r + 1) * cols];
        for i in 0..cols {
            for j in 0..cols {
                out[i * cols + j] += row[i] * row[j];
            }
        }
    }
    out
}

pub fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `j` (row-major, `dim x dim`) is the eigenvector of `values[j]`.
    pub vectors: Vec<f64>,
    pub dim: usize,
}

impl SymmetricEigen {
    pub fn vector(&self, j: usize) -> Vec<f64> {
        (0..self.dim).map(|i| self.vectors[i * self.dim + j]).collect()
    }

    /// `V diag(f(values)) V^T`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for k in 0..d {
            let w = f(self.values[k]);
            for i in 0..d {
                let vik = self.vectors[i * d + k] * w;
                for j in 0..d {
                    out[i * d + j] += vik * self.vectors[j * d + k];
                }
            }
        }
        out
    }
}

/// Cyclic Jacobi rotations until the off-diagonal mass is negligible.
pub fn symmetric_eigen(a: &[f64], dim: usize) -> SymmetricEigen {
    let mut m = a.to_vec();
    let mut v = vec![0.0; dim * dim];
    for i in 0..dim {
        v[i * dim + i] = 1.0;
    }
    let scale: f64 = m.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..dim)
            .flat_map(|i| (0..dim).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * dim + j] * m[i * dim + j])
            .sum();
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..dim {
            for q in (p + 1)..dim {
                let apq = m[p * dim + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * dim + p];
                let aqq = m[q * dim + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..dim {
                    let mkp = m[k * dim + p];
                    let mkq = m[k * dim + q];
                    m[k * dim + p] = c * mkp - s * mkq;
                    m[k * dim + q] = s * mkp + c * mkq;
                }
                for k in 0..dim {
                    let mpk = m[p * dim + k];
                    let mqk = m[q * dim + k];
                    m[p * dim + k] = c * mpk - s * mqk;
                    m[q * dim + k] = s * mpk + c * mqk;
                }
                for k in 0..dim {
                    let vkp = v[k * dim + p];
                    let vkq = v[k * dim + q];
                    v[k * dim + p] = c * vkp - s * vkq;
                    v[k * dim + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| m[i * dim + i].total_cmp(&m[j * dim + j]));
    let values = order.iter().map(|&i| m[i * dim + i]).collect();
    let mut vectors = vec![0.0; dim * dim];
    for (new, &old) in order.iter().enumerate() {
        for i in 0..dim {
            vectors[i * dim + new] = v[i * dim + old];
        }
    }
    SymmetricEigen { values, vectors, dim }
}

/// Solves `A x = b` for symmetric positive definite `A` by Cholesky.
pub fn cholesky_solve(a: &[f64], dim: usize, b: &[f64]) -> Result<Vec<f64>> {
    let mut l = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut s = a[i * dim + j];
            for k in 0..j {
                s -= l[i * dim + k] * l[j * dim + k];
            }
            if i == j {
                if s <= 0.0 {
                    bail!(Params, "matrix is not positive definite");
                }
                l[i * dim + i] = libm::sqrt(s);
            } else {
                l[i * dim + j] = s / l[j * dim + j];
            }
        }
    }
    let mut y = vec![0.0; dim];
    for i in 0..dim {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * dim + k] * y[k];
        }
        y[i] = s / l[i * dim + i];
    }
    let mut x = vec![0.0; dim];
    for i in (0..dim).rev() {
        let mut s = y[i];
        for k in (i + 1)..dim {
            s -= l[k * dim + i] * x[k];
        }
        x[i] = s / l[i * dim + i];
    }
    Ok(x)
}

/// Orthonormalises the columns of a square matrix (modified Gram-Schmidt).
pub fn orthonormalize(a: &[f64], dim: usize) -> Result<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = (0..dim).map(|j| (0..dim).map(|i| a[i * dim + j]).collect()).collect();
    for j in 0..dim {
        for k in 0..j {
            let proj = dot(&cols[j], &cols[k]);
            let (head, tail) = cols.split_at_mut(j);
            for (x, y) in tail[0].iter_mut().zip(&head[k]) {
                *x -= proj * y;
            }
        }
        let nrm = norm(&cols[j]);
        if nrm < 1e-12 {
            bail!(Params, "columns are linearly dependent");
        }
        for x in &mut cols[j] {
            *x /= nrm;
        }
    }
    let mut out = vec![0.0; dim * dim];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..dim {
            out[i * dim + j] = col[i];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_of_known_matrix() {
        // eigenvalues 1 and 3
        let a = [2.0, 1.0, 1.0, 2.0];
        let e = symmetric_eigen(&a, 2);
        assert!((e.values[0] - 1.0).abs() < 1e-14);
        assert!((e.values[1] - 3.0).abs() < 1e-14);
        let back = e.reconstruct_with(|v| v);
        for (x, y) in back.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn cholesky_solves() {
        let a = [4.0, 2.0, 0.0, 2.0, 5.0, 1.0, 0.0, 1.0, 3.0];
        let x = [1.0, -2.0, 0.5];
        let b = matvec(&a, 3, 3, &x);
        let sol = cholesky_solve(&a, 3, &b).unwrap();
        for (s, t) in sol.iter().zip(x.iter()) {
            assert!((s - t).abs() < 1e-13);
        }
        assert!(cholesky_solve(&[0.0], 1, &[1.0]).is_err());
    }

    #[test]
    fn orthonormal_columns() {
        let a = [1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        let q = orthonormalize(&a, 3).unwrap();
        let qtq = matmul(&transpose(&q, 3, 3), &q, 3, 3, 3);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((qtq[i * 3 + j] - e).abs() < 1e-14);
            }
        }
    }
}
