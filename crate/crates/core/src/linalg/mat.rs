use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix. Zero-sized dimensions are valid and behave as
/// empty blocks: products with an empty inner dimension are zero matrices.
#[derive(Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Config(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    /// Builds a matrix from row vectors. An empty slice gives a `0 x 0` matrix.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::Config(format!(
                "ragged matrix: row {bad} has {} entries, expected {cols}",
                rows[bad].len()
            )));
        }
        Ok(Mat { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn from_f64_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let conv: Vec<Vec<T>> = rows.iter().map(|r| r.iter().map(|&x| T::lit(x)).collect()).collect();
        Self::from_rows(&conv)
    }

    pub fn column(v: &[T]) -> Self {
        Mat { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    pub fn diag(d: &[T]) -> Self {
        Self::from_fn(d.len(), d.len(), |i, j| if i == j { d[i] } else { T::zero() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn set_col(&mut self, j: usize, v: &[T]) {
        assert_eq!(v.len(), self.rows, "column length mismatch");
        for (i, &x) in v.iter().enumerate() {
            self[(i, j)] = x;
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &Mat<T>) -> Self {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] = out.data[i * rhs.cols + j] + a * rhs[(k, j)];
                }
            }
        }
        out
    }

    /// Product with entries at or below their rounding-error bound set to
    /// exactly zero.
    pub fn matmul_flush(&self, rhs: &Mat<T>) -> Self {
        let mut out = self.matmul(rhs);
        let gamma = T::epsilon() * T::from_usize_lossy(self.cols + 4);
        for i in 0..out.rows {
            for j in 0..out.cols {
                let mut abs_sum = T::zero();
                for k in 0..self.cols {
                    abs_sum = abs_sum + (self[(i, k)] * rhs[(k, j)]).abs();
                }
                if out[(i, j)].abs() <= gamma * abs_sum {
                    out[(i, j)] = T::zero();
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "matrix-vector shape mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).fold(T::zero(), |acc, (&a, &b)| acc + a * b))
            .collect()
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    fn zip_with(&self, rhs: &Mat<T>, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.shape(), rhs.shape(), "elementwise shape mismatch");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn block(&self, r0: usize, nr: usize, c0: usize, nc: usize) -> Self {
        assert!(r0 + nr <= self.rows && c0 + nc <= self.cols, "block out of range");
        Self::from_fn(nr, nc, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn cols_range(&self, c0: usize, c1: usize) -> Self {
        self.block(0, self.rows, c0, c1 - c0)
    }

    pub fn rows_range(&self, r0: usize, r1: usize) -> Self {
        self.block(r0, r1 - r0, 0, self.cols)
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Mat<T>) {
        assert!(r0 + b.rows <= self.rows && c0 + b.cols <= self.cols, "block out of range");
        for i in 0..b.rows {
            for j in 0..b.cols {
                self[(r0 + i, c0 + j)] = b[(i, j)];
            }
        }
    }

    /// Horizontal concatenation; all parts must share the row count.
    pub fn hstack(parts: &[&Mat<T>]) -> Self {
        let rows = parts.first().map_or(0, |m| m.rows);
        assert!(parts.iter().all(|m| m.rows == rows), "hstack row mismatch");
        let cols = parts.iter().map(|m| m.cols).sum();
        let mut out = Mat::zeros(rows, cols);
        let mut c = 0;
        for m in parts {
            out.set_block(0, c, m);
            c += m.cols;
        }
        out
    }

    /// Vertical concatenation; all parts must share the column count.
    pub fn vstack(parts: &[&Mat<T>]) -> Self {
        let cols = parts.first().map_or(0, |m| m.cols);
        assert!(parts.iter().all(|m| m.cols == cols), "vstack column mismatch");
        let rows = parts.iter().map(|m| m.rows).sum();
        let mut out = Mat::zeros(rows, cols);
        let mut r = 0;
        for m in parts {
            out.set_block(r, 0, m);
            r += m.rows;
        }
        out
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    pub fn symmetrize(&self) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(self.rows, self.cols, |i, j| (self[(i, j)] + self[(j, i)]) * half)
    }

    pub fn cast<U: Scalar>(&self) -> Mat<U> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| U::lit(x.as_f64())).collect() }
    }

    pub fn approx_eq(&self, other: &Mat<T>, tol: T) -> bool {
        self.shape() == other.shape()
            && self.data.iter().zip(&other.data).all(|(&a, &b)| (a - b).abs() <= tol)
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Scalar> Add for &Mat<T> {
    type Output = Mat<T>;
    fn add(self, rhs: &Mat<T>) -> Mat<T> {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl<T: Scalar> Sub for &Mat<T> {
    type Output = Mat<T>;
    fn sub(self, rhs: &Mat<T>) -> Mat<T> {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl<T: Scalar> Mul for &Mat<T> {
    type Output = Mat<T>;
    fn mul(self, rhs: &Mat<T>) -> Mat<T> {
        self.matmul(rhs)
    }
}

impl<T: Scalar> Neg for &Mat<T> {
    type Output = Mat<T>;
    fn neg(self) -> Mat<T> {
        self.map(|x| -x)
    }
}

impl<T: fmt::Debug> fmt::Debug for Mat<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat{}x{}", self.rows, self.cols)?;
        let cols = self.cols.max(1);
        f.debug_list().entries(self.data.chunks(cols).take(self.rows)).finish()
    }
}

/// Euclidean vector helpers.
pub mod vec_ops {
    use crate::scalar::Scalar;

    pub fn norm2<T: Scalar>(v: &[T]) -> T {
        v.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
    }

    pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
        assert_eq!(a.len(), b.len());
        a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
    }

    pub fn add<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
        assert_eq!(a.len(), b.len());
        a.iter().zip(b).map(|(&x, &y)| x + y).collect()
    }

    pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
        assert_eq!(a.len(), b.len());
        a.iter().zip(b).map(|(&x, &y)| x - y).collect()
    }

    pub fn scale<T: Scalar>(a: &[T], s: T) -> Vec<T> {
        a.iter().map(|&x| x * s).collect()
    }

    /// Sum of several equally long vectors.
    pub fn sum<T: Scalar>(parts: &[&[T]]) -> Vec<T> {
        let n = parts.first().map_or(0, |p| p.len());
        let mut out = vec![T::zero(); n];
        for p in parts {
            assert_eq!(p.len(), n);
            for (o, &x) in out.iter_mut().zip(p.iter()) {
                *o = *o + x;
            }
        }
        out
    }
}
