//! Dense row-major matrices and the numerical kernels built on them.
//!
//! Matrices are immutable after construction (all operations return new
//! values), and every kernel uses a fixed accumulation order so results are
//! bit-reproducible across runs.

use crate::error::{EptError, Result};
use crate::scalar::Scalar;
use rand::Rng;

/// Axis selector for reductions and softmax.
///
/// `Cols` normalizes across the columns of each row (each row sums to 1);
/// `Rows` normalizes down the rows of each column (each column sums to 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

/// Dense matrix with row-major storage. Zero-sized dimensions are allowed
/// and behave as the corresponding degenerate linear maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F = f64> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: F) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = F::one();
        }
        m
    }

    /// Build from a row-major vector; length must equal `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "data length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        Matrix { rows, cols, data }
    }

    /// Build from nested rows (test convenience).
    pub fn from_rows(rows: &[&[F]]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            assert_eq!(r.len(), n_cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: n_rows,
            cols: n_cols,
            data,
        }
    }

    /// Entries drawn uniformly from `[lo, hi)`. Sampling happens in f64 and is
    /// cast to `F`, so a given seed produces the same draw at either precision.
    pub fn random_uniform<R: Rng>(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| F::cast(lo + rng.gen::<f64>() * (hi - lo)))
            .collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `(rows, cols)` pair, mostly for error reporting.
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn get(&self, row: usize, col: usize) -> F {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: F) {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[F] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Matrix product. Accumulation runs left-to-right over the inner index
    /// for every output entry, so the result is deterministic.
    pub fn matmul(&self, other: &Matrix<F>) -> Result<Matrix<F>> {
        if self.cols != other.rows {
            return Err(self.shape_error("matmul", other));
        }
        let (p, q, r) = (self.rows, self.cols, other.cols);
        let mut out = vec![F::zero(); p * r];
        for i in 0..p {
            let a_row = &self.data[i * q..(i + 1) * q];
            let out_row = &mut out[i * r..(i + 1) * r];
            for (k, &a_ik) in a_row.iter().enumerate() {
                let b_row = &other.data[k * r..(k + 1) * r];
                for (o, &b_kj) in out_row.iter_mut().zip(b_row) {
                    *o = *o + a_ik * b_kj;
                }
            }
        }
        Ok(Matrix {
            rows: p,
            cols: r,
            data: out,
        })
    }

    pub fn transpose(&self) -> Matrix<F> {
        let mut out = vec![F::zero(); self.rows * self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data: out,
        }
    }

    pub fn add(&self, other: &Matrix<F>) -> Result<Matrix<F>> {
        self.zip_with("add", other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix<F>) -> Result<Matrix<F>> {
        self.zip_with("sub", other, |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Matrix<F>) -> Result<Matrix<F>> {
        self.zip_with("hadamard", other, |a, b| a * b)
    }

    pub fn scale(&self, factor: F) -> Matrix<F> {
        self.map(|x| x * factor)
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Matrix<F> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Elementwise `max(0, x)`.
    pub fn relu(&self) -> Matrix<F> {
        self.map(|x| if x > F::zero() { x } else { F::zero() })
    }

    /// Softmax along the chosen axis, computed with max-subtraction.
    /// Each slice along the axis sums to 1.
    pub fn softmax(&self, axis: Axis) -> Matrix<F> {
        match axis {
            Axis::Cols => {
                let mut out = self.clone();
                for i in 0..self.rows {
                    softmax_slice(&mut out.data[i * self.cols..(i + 1) * self.cols]);
                }
                out
            }
            Axis::Rows => self.transpose().softmax(Axis::Cols).transpose(),
        }
    }

    /// Sum over one axis: `Cols` yields an n×1 column of row sums, `Rows`
    /// a 1×n row of column sums.
    pub fn sum_axis(&self, axis: Axis) -> Matrix<F> {
        match axis {
            Axis::Cols => {
                let data = (0..self.rows)
                    .map(|i| self.row(i).iter().fold(F::zero(), |acc, &x| acc + x))
                    .collect();
                Matrix {
                    rows: self.rows,
                    cols: 1,
                    data,
                }
            }
            Axis::Rows => {
                let mut data = vec![F::zero(); self.cols];
                for i in 0..self.rows {
                    for (acc, &x) in data.iter_mut().zip(self.row(i)) {
                        *acc = *acc + x;
                    }
                }
                Matrix {
                    rows: 1,
                    cols: self.cols,
                    data,
                }
            }
        }
    }

    pub fn sum(&self) -> F {
        self.data.iter().fold(F::zero(), |acc, &x| acc + x)
    }

    pub fn frobenius_norm(&self) -> F {
        self.data
            .iter()
            .fold(F::zero(), |acc, &x| acc + x * x)
            .sqrt()
    }

    pub fn max_abs(&self) -> F {
        self.data.iter().fold(F::zero(), |acc, &x| acc.max(x.abs()))
    }

    /// Largest elementwise absolute difference; shapes must match.
    pub fn max_abs_diff(&self, other: &Matrix<F>) -> F {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(F::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    /// Rows `start..start + len` as a new matrix.
    pub fn slice_rows(&self, start: usize, len: usize) -> Matrix<F> {
        assert!(start + len <= self.rows, "row slice out of range");
        Matrix {
            rows: len,
            cols: self.cols,
            data: self.data[start * self.cols..(start + len) * self.cols].to_vec(),
        }
    }

    /// Columns `start..start + len` as a new matrix.
    pub fn slice_cols(&self, start: usize, len: usize) -> Matrix<F> {
        assert!(start + len <= self.cols, "column slice out of range");
        let mut data = Vec::with_capacity(self.rows * len);
        for i in 0..self.rows {
            data.extend_from_slice(&self.data[i * self.cols + start..i * self.cols + start + len]);
        }
        Matrix {
            rows: self.rows,
            cols: len,
            data,
        }
    }

    /// Stack vertically; all parts must share a column count. Parts with zero
    /// rows contribute nothing.
    pub fn concat_rows(parts: &[&Matrix<F>]) -> Result<Matrix<F>> {
        let cols = parts.iter().find(|p| p.rows > 0).map_or(0, |p| p.cols);
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            if p.rows == 0 {
                continue;
            }
            if p.cols != cols {
                return Err(EptError::ShapeMismatch {
                    op: "concat_rows",
                    left_rows: rows,
                    left_cols: cols,
                    right_rows: p.rows,
                    right_cols: p.cols,
                });
            }
            rows += p.rows;
            data.extend_from_slice(&p.data);
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Stack horizontally; all parts must share a row count.
    pub fn concat_cols(parts: &[&Matrix<F>]) -> Result<Matrix<F>> {
        let rows = parts.iter().find(|p| p.cols > 0).map_or(0, |p| p.rows);
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for p in parts {
                if p.cols == 0 {
                    continue;
                }
                if p.rows != rows {
                    return Err(EptError::ShapeMismatch {
                        op: "concat_cols",
                        left_rows: rows,
                        left_cols: cols,
                        right_rows: p.rows,
                        right_cols: p.cols,
                    });
                }
                data.extend_from_slice(&p.data[i * p.cols..(i + 1) * p.cols]);
            }
        }
        Ok(Matrix { rows, cols, data })
    }

    /// `self + row` with the 1×d row broadcast over every row of `self`.
    pub fn add_row_broadcast(&self, row: &Matrix<F>) -> Result<Matrix<F>> {
        if row.rows != 1 || row.cols != self.cols {
            return Err(self.shape_error("add_row_broadcast", row));
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            for (o, &b) in out.data[i * self.cols..(i + 1) * self.cols]
                .iter_mut()
                .zip(&row.data)
            {
                *o = *o + b;
            }
        }
        Ok(out)
    }

    /// `self * col` with the n×1 column broadcast across every column.
    pub fn mul_col_broadcast(&self, col: &Matrix<F>) -> Result<Matrix<F>> {
        if col.cols != 1 || col.rows != self.rows {
            return Err(self.shape_error("mul_col_broadcast", col));
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            let c = col.data[i];
            for o in &mut out.data[i * self.cols..(i + 1) * self.cols] {
                *o = *o * c;
            }
        }
        Ok(out)
    }

    /// Convert entries to another scalar type.
    pub fn cast<G: Scalar>(&self) -> Matrix<G> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|&x| G::cast(x.to_f64_lossless()))
                .collect(),
        }
    }

    fn zip_with(
        &self,
        op: &'static str,
        other: &Matrix<F>,
        f: impl Fn(F, F) -> F,
    ) -> Result<Matrix<F>> {
        if self.shape() != other.shape() {
            return Err(self.shape_error(op, other));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    fn shape_error(&self, op: &'static str, other: &Matrix<F>) -> EptError {
        EptError::ShapeMismatch {
            op,
            left_rows: self.rows,
            left_cols: self.cols,
            right_rows: other.rows,
            right_cols: other.cols,
        }
    }
}

fn softmax_slice<F: Scalar>(slice: &mut [F]) {
    if slice.is_empty() {
        return;
    }
    let max = slice.iter().fold(F::neg_infinity(), |acc, &x| acc.max(x));
    let mut sum = F::zero();
    for x in slice.iter_mut() {
        *x = (*x - max).exp();
        sum = sum + *x;
    }
    for x in slice.iter_mut() {
        *x = *x / sum;
    }
}
