use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
}

impl Matrix {
    pub fn new(data: Vec<f64>, n_rows: usize, n_cols: usize) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::Schema(format!("buffer of {} values does not fit {n_rows}x{n_cols}", data.len())));
        }
        Ok(Self { data, n_rows, n_cols })
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self { data: vec![0.0; n_rows * n_cols], n_rows, n_cols }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n_cols {
                return Err(Error::Schema(format!("row {i} has {} columns, expected {n_cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { data, n_rows: rows.len(), n_cols })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self { data, n_rows: indices.len(), n_cols: self.n_cols }
    }

    /// Append the rows of `other` below this matrix.
    pub fn vstack(&self, other: &Matrix) -> Result<Self> {
        if self.n_cols != other.n_cols && self.n_rows > 0 && other.n_rows > 0 {
            return Err(Error::Schema(format!("cannot stack {} and {} columns", self.n_cols, other.n_cols)));
        }
        let n_cols = if self.n_rows > 0 { self.n_cols } else { other.n_cols };
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self { data, n_rows: self.n_rows + other.n_rows, n_cols })
    }
}
