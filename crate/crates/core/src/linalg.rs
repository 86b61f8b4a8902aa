//! Dense row-major matrices and vectors.
//!
//! Block dimensions in this crate stay small (a few hundred at most), so the
//! kernels are plain loops. The `i-k-j` ordering in [`DenseMatrix::matmul`]
//! accumulates each output entry in the same order as the textbook triple
//! loop, which keeps results bitwise reproducible.

use std::fmt;

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

#[derive(Clone, PartialEq, Default)]
pub struct DenseVector<T> {
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be >= 1");
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    /// Builds a matrix from row-major storage.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "matrix dimensions must be >= 1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(shape_err("DenseMatrix::from_vec", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
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

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn matmul(&self, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if self.cols != b.rows {
            return Err(shape_err(
                "matmul",
                format!("rhs with {} rows", self.cols),
                format!("{}x{}", b.rows, b.cols),
            ));
        }
        let n = b.cols;
        let mut out = vec![T::zero(); self.rows * n];
        for i in 0..self.rows {
            let out_row = &mut out[i * n..(i + 1) * n];
            for k in 0..self.cols {
                let aik = self.data[i * self.cols + k];
                let b_row = &b.data[k * n..(k + 1) * n];
                for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                    *o += aik * bkj;
                }
            }
        }
        Ok(DenseMatrix {
            rows: self.rows,
            cols: n,
            data: out,
        })
    }

    pub fn matvec(&self, x: &DenseVector<T>) -> Result<DenseVector<T>> {
        if self.cols != x.dim() {
            return Err(shape_err("matvec", self.cols, x.dim()));
        }
        let data = (0..self.rows)
            .map(|i| {
                let mut acc = T::zero();
                for (&a, &v) in self.row(i).iter().zip(&x.data) {
                    acc += a * v;
                }
                acc
            })
            .collect();
        Ok(DenseVector { data })
    }

    /// `selfᵀ · x` without materializing the transpose.
    pub fn matvec_transposed(&self, x: &DenseVector<T>) -> Result<DenseVector<T>> {
        if self.rows != x.dim() {
            return Err(shape_err("matvec_transposed", self.rows, x.dim()));
        }
        let mut data = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            let xi = x.data[i];
            for (o, &a) in data.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        Ok(DenseVector { data })
    }

    pub fn transpose(&self) -> DenseMatrix<T> {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `self · diag(d)`: scales column `j` by `d[j]`.
    pub fn scale_columns(&self, d: &DenseVector<T>) -> Result<DenseMatrix<T>> {
        if self.cols != d.dim() {
            return Err(shape_err("scale_columns", self.cols, d.dim()));
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[i * self.cols + j] *= d.data[j];
            }
        }
        Ok(out)
    }

    /// `diag(d) · self`: scales row `i` by `d[i]`.
    pub fn scale_rows(&self, d: &DenseVector<T>) -> Result<DenseMatrix<T>> {
        if self.rows != d.dim() {
            return Err(shape_err("scale_rows", self.rows, d.dim()));
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            for v in &mut out.data[i * self.cols..(i + 1) * self.cols] {
                *v *= d.data[i];
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, alpha: T) -> DenseMatrix<T> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| alpha * v).collect(),
        }
    }

    pub fn neg(&self) -> DenseMatrix<T> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| -v).collect(),
        }
    }

    pub fn add(&self, other: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if self.shape() != other.shape() {
            return Err(shape_err(
                "matrix add",
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    /// `self += alpha * other`, in place.
    pub fn axpy_in_place(&mut self, alpha: T, other: &DenseMatrix<T>) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(shape_err(
                "matrix axpy",
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<T: Scalar> DenseVector<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            data: vec![T::zero(); dim],
        }
    }

    pub fn from_vec(data: Vec<T>) -> Self {
        Self { data }
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize) -> T) -> Self {
        Self {
            data: (0..dim).map(f).collect(),
        }
    }

    /// Standard basis vector `e_i`.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.data[i] = T::one();
        v
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, i: usize) -> T {
        self.data[i]
    }

    pub fn set(&mut self, i: usize, v: T) {
        self.data[i] = v;
    }

    pub fn norm_inf(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn norm_l2(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn dot(&self, other: &DenseVector<T>) -> Result<T> {
        self.check_same(other, "dot")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum())
    }

    /// `alpha * self + y`.
    pub fn axpy(&self, alpha: T, y: &DenseVector<T>) -> Result<DenseVector<T>> {
        axpy(alpha, self, y)
    }

    pub fn add(&self, other: &DenseVector<T>) -> Result<DenseVector<T>> {
        self.zip_with(other, "vector add", |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseVector<T>) -> Result<DenseVector<T>> {
        self.zip_with(other, "vector sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &DenseVector<T>) -> Result<DenseVector<T>> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn add_assign(&mut self, other: &DenseVector<T>) -> Result<()> {
        self.check_same(other, "vector add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scaled(&self, alpha: T) -> DenseVector<T> {
        self.map(|v| alpha * v)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> DenseVector<T> {
        DenseVector {
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn zip_with(
        &self,
        other: &DenseVector<T>,
        op: &'static str,
        f: impl Fn(T, T) -> T,
    ) -> Result<DenseVector<T>> {
        self.check_same(other, op)?;
        Ok(DenseVector {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    fn check_same(&self, other: &DenseVector<T>, op: &'static str) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(shape_err(op, self.dim(), other.dim()));
        }
        Ok(())
    }
}

pub fn matmul<T: Scalar>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    a.matmul(b)
}

pub fn matvec<T: Scalar>(a: &DenseMatrix<T>, x: &DenseVector<T>) -> Result<DenseVector<T>> {
    a.matvec(x)
}

/// `u ⊗ v = u vᵀ`.
pub fn outer<T: Scalar>(u: &DenseVector<T>, v: &DenseVector<T>) -> DenseMatrix<T> {
    DenseMatrix::from_fn(u.dim(), v.dim(), |i, j| u.data[i] * v.data[j])
}

pub fn norm_inf<T: Scalar>(x: &DenseVector<T>) -> T {
    x.norm_inf()
}

pub fn norm_l2<T: Scalar>(x: &DenseVector<T>) -> T {
    x.norm_l2()
}

/// `alpha * x + y`.
pub fn axpy<T: Scalar>(alpha: T, x: &DenseVector<T>, y: &DenseVector<T>) -> Result<DenseVector<T>> {
    x.check_same(y, "axpy")?;
    Ok(DenseVector {
        data: x
            .data
            .iter()
            .zip(&y.data)
            .map(|(&a, &b)| alpha * a + b)
            .collect(),
    })
}

pub fn diag_from<T: Scalar>(values: &DenseVector<T>) -> DenseMatrix<T> {
    let n = values.dim();
    DenseMatrix::from_fn(n, n, |i, j| if i == j { values.data[i] } else { T::zero() })
}

/// Largest block-wise infinity norm of a stacked vector.
pub fn stacked_norm_inf<T: Scalar>(blocks: &[DenseVector<T>]) -> T {
    blocks.iter().fold(T::zero(), |m, b| m.max(b.norm_inf()))
}

impl<T: fmt::Debug> fmt::Debug for DenseMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, "; ")?;
            }
            for (j, v) in self.data[i * self.cols..(i + 1) * self.cols]
                .iter()
                .enumerate()
            {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{v:?}")?;
            }
        }
        write!(f, "]")
    }
}

impl<T: fmt::Debug> fmt::Debug for DenseVector<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.data).finish()
    }
}

impl<T> From<Vec<T>> for DenseVector<T> {
    fn from(data: Vec<T>) -> Self {
        Self { data }
    }
}
