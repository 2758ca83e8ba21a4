//! Small dense matrix kernels for the ridge machinery and oracles.
//!
//! Everything here targets symmetric positive-definite matrices of modest
//! dimension (the feature dimension `d`), so a plain row-major layout and
//! an unblocked Cholesky factorization are all that is needed.

use alloc::vec;
use alloc::vec::Vec;

use crate::num;

/// Row-major square matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Zero matrix of size `dim` x `dim`.
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    /// `scale * I`.
    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = scale;
        }
        m
    }

    /// Builds a matrix from a row-major buffer of length `dim * dim`.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Option<Self> {
        if data.len() == dim * dim {
            Some(Self { dim, data })
        } else {
            None
        }
    }

    /// Matrix dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major backing slice.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub(crate) fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    /// `self += scale * v v^T`.
    pub fn add_scaled_outer(&mut self, v: &[f64], scale: f64) {
        debug_assert_eq!(v.len(), self.dim);
        for i in 0..self.dim {
            let vi = scale * v[i];
            if vi == 0.0 {
                continue;
            }
            let row = &mut self.data[i * self.dim..(i + 1) * self.dim];
            for (entry, &vj) in row.iter_mut().zip(v) {
                *entry += vi * vj;
            }
        }
    }

    /// `out = self * x`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(&self.data[i * self.dim..(i + 1) * self.dim], x);
        }
    }

    /// `self * x` as a fresh vector.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.mul_vec_into(x, &mut out);
        out
    }

    /// `x^T self x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let mut acc = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            acc += xi * dot(&self.data[i * self.dim..(i + 1) * self.dim], x);
        }
        acc
    }

    /// Max absolute entry of `self * other - I`; consistency gauge for a
    /// maintained inverse.
    pub fn product_identity_drift(&self, other: &DenseMatrix) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += self.get(i, k) * other.get(k, j);
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max(num::abs(acc - target));
            }
        }
        worst
    }

    /// Cholesky factorization `self = L L^T`; `None` if the matrix is not
    /// numerically positive definite.
    pub fn cholesky(&self) -> Option<Cholesky> {
        let n = self.dim;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut acc = self.get(i, j);
                for k in 0..j {
                    acc -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if acc <= 0.0 {
                        return None;
                    }
                    l[i * n + i] = num::sqrt(acc);
                } else {
                    l[i * n + j] = acc / l[j * n + j];
                }
            }
        }
        Some(Cholesky { dim: n, lower: l })
    }
}

/// Lower-triangular Cholesky factor of an SPD matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    /// Solves `A x = b` given `A = L L^T`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.dim);
        let n = self.dim;
        let mut x = b.to_vec();
        // forward: L y = b
        for i in 0..n {
            let mut acc = x[i];
            for k in 0..i {
                acc -= self.lower[i * n + k] * x[k];
            }
            x[i] = acc / self.lower[i * n + i];
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let mut acc = x[i];
            for k in i + 1..n {
                acc -= self.lower[k * n + i] * x[k];
            }
            x[i] = acc / self.lower[i * n + i];
        }
        x
    }

    /// Full inverse of the factored matrix.
    pub fn inverse(&self) -> DenseMatrix {
        let n = self.dim;
        let mut inv = DenseMatrix::zeros(n);
        let mut unit = vec![0.0; n];
        for j in 0..n {
            unit[j] = 1.0;
            let col = self.solve(&unit);
            unit[j] = 0.0;
            for i in 0..n {
                inv.set(i, j, col[i]);
            }
        }
        inv
    }

    /// `log det A = 2 sum_i log L_ii`.
    pub fn log_det(&self) -> f64 {
        let n = self.dim;
        let mut acc = 0.0;
        for i in 0..n {
            acc += num::ln(self.lower[i * n + i]);
        }
        2.0 * acc
    }
}

/// Dot product.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Euclidean norm.
pub fn norm2(a: &[f64]) -> f64 {
    num::sqrt(dot(a, a))
}
