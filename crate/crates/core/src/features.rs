//! Dense feature matrices: one row per point, one column per feature dimension.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};

/// Row-major dense matrix of finite feature values.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, n_rows: usize, n_cols: usize) -> Result<Self> {
        if n_cols == 0 {
            return Err(invalid("feature matrix needs at least one column"));
        }
        if data.len() != n_rows * n_cols {
            return Err(invalid(format!(
                "feature buffer has {} values, expected {}x{}",
                data.len(),
                n_rows,
                n_cols
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "non-finite feature at row {}, column {}",
                pos / n_cols,
                pos % n_cols
            )));
        }
        Ok(Self { data, n_rows, n_cols })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n_cols {
                return Err(invalid(format!("row {i} has {} columns, expected {n_cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Self::new(data, rows.len(), n_cols)
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Result<Self> {
        let (r, c) = m.shape();
        Self::new(m.transpose().as_slice().to_vec(), r, c)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.n_cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access for in-crate updates; callers keep entries finite.
    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self { data, n_rows: indices.len(), n_cols: self.n_cols }
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &Self) -> Result<Self> {
        crate::error::check_dim(self.n_cols, other.n_cols)?;
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self { data, n_rows: self.n_rows + other.n_rows, n_cols: self.n_cols })
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_rows, self.n_cols, &self.data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(FeatureMatrix::new(vec![1.0, f64::NAN], 1, 2).is_err());
        assert!(FeatureMatrix::new(vec![1.0, 2.0, 3.0], 1, 2).is_err());
    }

    #[test]
    fn dmatrix_round_trip_keeps_row_order() {
        let f = FeatureMatrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let m = f.to_dmatrix();
        assert_eq!(m[(1, 0)], 4.0);
        assert_eq!(FeatureMatrix::from_dmatrix(&m).unwrap(), f);
    }
}
