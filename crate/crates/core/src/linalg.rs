//! Dense vectors and matrices used for parameters and factor blocks.
//!
//! Deliberately small: the framework only needs axpy-style updates, dot
//! products, row access and elementwise averaging, all with a fixed,
//! documented summation order so that runs are bit-reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense parameter vector `w` exchanged between machines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(dim: usize) -> Self {
        ParamVector { values: vec![0.0; dim] }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        ParamVector { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &Self) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.values {
            *a *= alpha;
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|a| a * a).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn distance_sq(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Elementwise arithmetic mean; slots are summed in order, then scaled.
    pub fn mean_of(slots: &[Self]) -> Result<Self> {
        let first = slots
            .first()
            .ok_or_else(|| Error::protocol("mean of zero vectors"))?;
        let mut acc = first.clone();
        for s in &slots[1..] {
            if s.dim() != acc.dim() {
                return Err(Error::protocol(format!(
                    "dimension mismatch across slots: {} vs {}",
                    acc.dim(),
                    s.dim()
                )));
            }
            acc.add_scaled(1.0, s);
        }
        acc.scale(1.0 / slots.len() as f64);
        Ok(acc)
    }
}

/// Dense row-major matrix; rows are user/item factor vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_data(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::contract(format!(
                "matrix data length {} does not match {}x{}",
                data.len(), rows, cols
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `A x` for a dense vector.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `A^T y`.
    pub fn transpose_matvec(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let yi = y[i];
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += yi * a;
            }
        }
        out
    }

    /// `A^T A`, formed densely.
    pub fn gram(&self) -> Matrix {
        let mut g = Matrix::zeros(self.cols, self.cols);
        for i in 0..self.rows {
            let r = self.row(i);
            for a in 0..self.cols {
                for b in 0..self.cols {
                    g.data[a * self.cols + b] += r[a] * r[b];
                }
            }
        }
        g
    }

    /// Copies the given row range into a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Matrix {
        Matrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Writes `block` back over rows `start..start + block.rows`.
    pub fn write_rows(&mut self, start: usize, block: &Matrix) {
        debug_assert_eq!(self.cols, block.cols);
        let len = block.rows * block.cols;
        self.data[start * self.cols..start * self.cols + len].copy_from_slice(&block.data);
    }

    /// Elementwise mean of equally shaped matrices, summed in slot order.
    pub fn mean_of(slots: &[Self]) -> Result<Self> {
        let first = slots
            .first()
            .ok_or_else(|| Error::protocol("mean of zero matrices"))?;
        let mut acc = first.clone();
        for s in &slots[1..] {
            if s.rows != acc.rows || s.cols != acc.cols {
                return Err(Error::protocol(format!(
                    "shape mismatch across slots: {}x{} vs {}x{}",
                    acc.rows, acc.cols, s.rows, s.cols
                )));
            }
            for (a, b) in acc.data.iter_mut().zip(&s.data) {
                *a += b;
            }
        }
        let inv = 1.0 / slots.len() as f64;
        for a in &mut acc.data {
            *a *= inv;
        }
        Ok(acc)
    }
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
///
/// Intended for the small reference systems of the simulator's diagnostics;
/// returns a contract violation on (numerically) singular systems.
pub fn solve_dense(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if a.n_rows() != a.n_cols() || a.n_rows() != b.len() {
        return Err(Error::contract(format!(
            "solve_dense needs a square system, got {}x{} with rhs {}",
            a.n_rows(),
            a.n_cols(),
            b.len()
        )));
    }
    let n = a.n_rows();
    let mut m = a.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r, &s| m.get(r, col).abs().total_cmp(&m.get(s, col).abs()))
            .unwrap();
        let pivot = m.get(pivot_row, col);
        if pivot.abs() < 1e-12 {
            return Err(Error::contract("singular system in solve_dense".to_string()));
        }
        if pivot_row != col {
            for j in 0..n {
                let tmp = m.get(col, j);
                m.set(col, j, m.get(pivot_row, j));
                m.set(pivot_row, j, tmp);
            }
            x.swap(col, pivot_row);
        }
        for row in col + 1..n {
            let factor = m.get(row, col) / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                let v = m.get(row, j) - factor * m.get(col, j);
                m.set(row, j, v);
            }
            x[row] -= factor * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut v = x[col];
        for j in col + 1..n {
            v -= m.get(col, j) * x[j];
        }
        x[col] = v / m.get(col, col);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_of_two_vectors() {
        let a = ParamVector::from_vec(vec![1.0, 3.0]);
        let b = ParamVector::from_vec(vec![3.0, 1.0]);
        let m = ParamVector::mean_of(&[a, b]).unwrap();
        assert_eq!(m.values(), &[2.0, 2.0]);
    }

    #[test]
    fn mean_rejects_mismatched_dims() {
        let a = ParamVector::zeros(2);
        let b = ParamVector::zeros(3);
        assert!(ParamVector::mean_of(&[a, b]).is_err());
    }

    #[test]
    fn solve_small_system() {
        // [2 1; 1 3] x = [5; 10] -> x = [1; 3]
        let a = Matrix::from_data(2, 2, vec![2.0, 1.0, 1.0, 3.0]).unwrap();
        let x = solve_dense(&a, &[5.0, 10.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn solve_rejects_singular() {
        let a = Matrix::from_data(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(solve_dense(&a, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn gram_and_matvec_agree() {
        let a = Matrix::from_data(3, 2, vec![1.0, 2.0, 0.0, 1.0, -1.0, 1.0]).unwrap();
        let g = a.gram();
        let x = vec![0.5, -2.0];
        let via_gram = g.matvec(&x);
        let direct = a.transpose_matvec(&a.matvec(&x));
        for (u, v) in via_gram.iter().zip(&direct) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn row_slicing_round_trip() {
        let mut m = Matrix::zeros(4, 3);
        for i in 0..4 {
            for j in 0..3 {
                m.set(i, j, (i * 3 + j) as f64);
            }
        }
        let block = m.slice_rows(1, 3);
        let mut copy = m.clone();
        copy.write_rows(1, &block);
        assert_eq!(copy, m);
    }
}
