use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, and a zero-width matrix still has rows
        (0..self.rows).map(move |r| self.row(r))
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn gather_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Places the column blocks side by side. All parts must share a row count.
    pub fn hconcat(parts: &[Matrix]) -> Matrix {
        let rows = parts.first().map_or(0, |p| p.rows);
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                assert_eq!(p.rows, rows, "hconcat row mismatch");
                data.extend_from_slice(p.row(r));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Stacks row blocks on top of each other. All parts must share a column count.
    pub fn vconcat(parts: &[Matrix]) -> Matrix {
        let cols = parts.first().map_or(0, |p| p.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            assert_eq!(p.cols, cols, "vconcat column mismatch");
            data.extend_from_slice(&p.data);
            rows += p.rows;
        }
        Matrix { rows, cols, data }
    }

    /// `self · rhs + bias` (bias broadcast over rows).
    ///
    /// Each output row depends only on the matching input row and is
    /// accumulated in a fixed order, so a row's result does not depend on
    /// which other rows share the batch.
    pub(crate) fn affine(&self, rhs: &Matrix, bias: &[f64]) -> Matrix {
        debug_assert_eq!(self.cols, rhs.rows);
        debug_assert_eq!(bias.len(), rhs.cols);
        let out_cols = rhs.cols;
        let mut out = Vec::with_capacity(self.rows * out_cols);
        for r in 0..self.rows {
            out.extend_from_slice(bias);
            let acc = &mut out[r * out_cols..(r + 1) * out_cols];
            for (k, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let w = rhs.row(k);
                for (o, &wv) in acc.iter_mut().zip(w) {
                    *o += a * wv;
                }
            }
        }
        Matrix {
            rows: self.rows,
            cols: out_cols,
            data: out,
        }
    }

    /// `selfᵀ · rhs`, accumulated into `out` (which has shape `self.cols × rhs.cols`).
    pub(crate) fn add_transpose_mul(&self, rhs: &Matrix, out: &mut Matrix) {
        debug_assert_eq!(self.rows, rhs.rows);
        debug_assert_eq!(out.rows, self.cols);
        debug_assert_eq!(out.cols, rhs.cols);
        for r in 0..self.rows {
            let d = rhs.row(r);
            for (k, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &dv) in out.row_mut(k).iter_mut().zip(d) {
                    *o += a * dv;
                }
            }
        }
    }

    /// `self · rhsᵀ`.
    pub(crate) fn mul_transpose(&self, rhs: &Matrix) -> Matrix {
        debug_assert_eq!(self.cols, rhs.cols);
        let mut out = Matrix::zeros(self.rows, rhs.rows);
        for r in 0..self.rows {
            let a = self.row(r);
            for k in 0..rhs.rows {
                out.data[r * rhs.rows + k] = dot(a, rhs.row(k));
            }
        }
        out
    }
}

impl core::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_mul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    #[test]
    fn affine_matches_naive_product() {
        let a = Matrix::from_rows(&[&[1.0, 0.0, -2.0], &[0.5, 3.0, 1.0]]);
        let b = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, -1.0], &[0.25, 4.0]]);
        let got = a.affine(&b, &[0.0, 1.0]);
        let mut want = naive_mul(&a, &b);
        for r in 0..2 {
            want[(r, 1)] += 1.0;
        }
        assert_eq!(got, want);
    }

    #[test]
    fn transpose_products() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let b = Matrix::from_rows(&[&[1.0, -1.0, 2.0], &[0.0, 1.0, 1.0], &[2.0, 2.0, 0.0]]);
        let mut at_b = Matrix::zeros(2, 3);
        a.add_transpose_mul(&b, &mut at_b);
        let mut at = Matrix::zeros(2, 3);
        for i in 0..3 {
            for j in 0..2 {
                at[(j, i)] = a[(i, j)];
            }
        }
        assert_eq!(at_b, naive_mul(&at, &b));

        let c = Matrix::from_rows(&[&[1.0, 1.0], &[2.0, 0.0]]);
        let mut ct = Matrix::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                ct[(j, i)] = c[(i, j)];
            }
        }
        assert_eq!(a.mul_transpose(&c), naive_mul(&a, &ct));
    }

    #[test]
    fn concat_layout() {
        let a = Matrix::from_rows(&[&[1.0], &[2.0]]);
        let b = Matrix::from_rows(&[&[3.0, 4.0], &[5.0, 6.0]]);
        let h = Matrix::hconcat(&[a.clone(), b]);
        assert_eq!(h.row(1), &[2.0, 5.0, 6.0]);
        let v = Matrix::vconcat(&[a.clone(), a]);
        assert_eq!(v.as_slice(), &[1.0, 2.0, 1.0, 2.0]);
    }
}
