//! Dense row-major matrices and the few vector kernels the rest of the crate
//! needs. Dimensions here are tiny (state dims <= 25, layer widths <= 64), so
//! simple loops beat any external BLAS once call overhead is counted.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Builds a matrix from row slices; all rows must have equal length.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("rows of unequal length".into()));
        }
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            data.extend_from_slice(row);
        }
        Ok(Matrix { rows: r, cols: c, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for r in 0..self.rows {
            y[r] = dot(self.row(r), x);
        }
    }

    /// y += A^T g, accumulated row-wise so the inner loop stays contiguous.
    pub fn matvec_t_acc(&self, g: &[f64], y: &mut [f64]) {
        debug_assert_eq!(g.len(), self.rows);
        debug_assert_eq!(y.len(), self.cols);
        for r in 0..self.rows {
            let gr = g[r];
            if gr == 0.0 {
                continue;
            }
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (yi, &wi) in y.iter_mut().zip(row) {
                *yi += wi * gr;
            }
        }
    }

    /// A x + b evaluated into a fresh vector.
    pub fn affine(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        let mut y = b.to_vec();
        for r in 0..self.rows {
            y[r] += dot(self.row(r), x);
        }
        y
    }

    /// Solves A x = b by LU factorization with partial pivoting.
    /// A must be square; returns a numeric error when A is singular.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if self.rows != self.cols {
            return Err(Error::Shape(format!(
                "solve needs a square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        if b.len() != self.rows {
            return Err(Error::Shape(format!(
                "solve rhs has length {}, expected {}",
                b.len(),
                self.rows
            )));
        }
        let n = self.rows;
        let mut lu = self.data.clone();
        let mut x = b.to_vec();
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut max = lu[piv[k] * n + k].abs();
            for r in k + 1..n {
                let v = lu[piv[r] * n + k].abs();
                if v > max {
                    max = v;
                    p = r;
                }
            }
            if max == 0.0 || !max.is_finite() {
                return Err(Error::Numeric(format!("singular matrix in solve (column {k})")));
            }
            piv.swap(k, p);
            let pk = piv[k];
            let pivot = lu[pk * n + k];
            for r in k + 1..n {
                let pr = piv[r];
                let f = lu[pr * n + k] / pivot;
                lu[pr * n + k] = f;
                for c in k + 1..n {
                    lu[pr * n + c] -= f * lu[pk * n + c];
                }
            }
        }
        // Forward substitution on the permuted rhs, then back substitution.
        let mut y = vec![0.0; n];
        for r in 0..n {
            let mut s = x[piv[r]];
            for c in 0..r {
                s -= lu[piv[r] * n + c] * y[c];
            }
            y[r] = s;
        }
        for r in (0..n).rev() {
            let mut s = y[r];
            for c in r + 1..n {
                s -= lu[piv[r] * n + c] * x[c];
            }
            x[r] = s / lu[piv[r] * n + r];
        }
        Ok(x)
    }

    /// Largest singular value of a 2x2 matrix, in closed form.
    pub fn spectral_norm_2x2(&self) -> Result<f64> {
        if self.rows != 2 || self.cols != 2 {
            return Err(Error::Shape("spectral_norm_2x2 needs a 2x2 matrix".into()));
        }
        let (a, b, c, d) = (self.data[0], self.data[1], self.data[2], self.data[3]);
        // Eigenvalues of A^T A via trace/determinant of the 2x2 Gram matrix.
        let g11 = a * a + c * c;
        let g12 = a * b + c * d;
        let g22 = b * b + d * d;
        let tr = g11 + g22;
        let det = g11 * g22 - g12 * g12;
        let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
        Ok(((tr + disc) / 2.0).sqrt())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// y += alpha * x.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}
