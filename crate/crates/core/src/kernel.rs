//! ARD Gaussian kernel `k(x, z) = exp(-1/2 * sum_d ((x_d - z_d) / l_d)^2)` and kernel matrices.
//!
//! Lengthscales and the ridge weight are stored as logarithms so that tuning
//! can move them without constraints.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, invalid, Result};
use crate::features::FeatureMatrix;

/// Ridge weight used when no other value is given.
pub const DEFAULT_LAMBDA: f64 = 1e-5;

/// Rows used by the median lengthscale heuristic.
pub const MEDIAN_SUBSAMPLE: usize = 1024;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KernelParams {
    log_lengthscales: Vec<f64>,
    log_lambda: f64,
}

impl KernelParams {
    pub fn new(lengthscales: &[f64], lambda: f64) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(invalid("at least one lengthscale is required"));
        }
        if let Some(l) = lengthscales.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(invalid(format!("lengthscale must be positive and finite, got {l}")));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(invalid(format!("ridge weight must be positive and finite, got {lambda}")));
        }
        Ok(Self { log_lengthscales: lengthscales.iter().map(|l| l.ln()).collect(), log_lambda: lambda.ln() })
    }

    pub fn from_log(log_lengthscales: Vec<f64>, log_lambda: f64) -> Result<Self> {
        if log_lengthscales.is_empty() {
            return Err(invalid("at least one lengthscale is required"));
        }
        if !log_lengthscales.iter().all(|v| v.is_finite()) || !log_lambda.is_finite() {
            return Err(invalid("log-parameters must be finite"));
        }
        Ok(Self { log_lengthscales, log_lambda })
    }

    /// Median heuristic: lengthscale `d` is the median of `|x_id - x_jd|` over all
    /// pairs of a seeded subsample of at most [`MEDIAN_SUBSAMPLE`] rows.
    pub fn median_heuristic(features: &FeatureMatrix, lambda: f64, seed: u64) -> Result<Self> {
        let n = features.n_rows();
        if n < 2 {
            return Err(invalid("median heuristic needs at least two rows"));
        }
        let rows: Vec<usize> = if n > MEDIAN_SUBSAMPLE {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = sample(&mut rng, n, MEDIAN_SUBSAMPLE).into_vec();
            idx.sort_unstable();
            idx
        } else {
            (0..n).collect()
        };
        let dim = features.n_cols();
        let mut diffs = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
        let mut lengthscales = Vec::with_capacity(dim);
        for d in 0..dim {
            diffs.clear();
            for (a, &i) in rows.iter().enumerate() {
                let xi = features.row(i)[d];
                for &j in &rows[a + 1..] {
                    diffs.push((xi - features.row(j)[d]).abs());
                }
            }
            let mid = diffs.len() / 2;
            let (_, median, _) = diffs.select_nth_unstable_by(mid, f64::total_cmp);
            // constant dimensions carry no scale information
            lengthscales.push(if *median > 0.0 { *median } else { 1.0 });
        }
        Self::new(&lengthscales, lambda)
    }

    pub fn dim(&self) -> usize {
        self.log_lengthscales.len()
    }

    pub fn log_lengthscales(&self) -> &[f64] {
        &self.log_lengthscales
    }

    pub fn lengthscales(&self) -> Vec<f64> {
        self.log_lengthscales.iter().map(|v| v.exp()).collect()
    }

    pub fn inverse_lengthscales(&self) -> Vec<f64> {
        self.log_lengthscales.iter().map(|v| (-v).exp()).collect()
    }

    pub fn log_lambda(&self) -> f64 {
        self.log_lambda
    }

    pub fn lambda(&self) -> f64 {
        self.log_lambda.exp()
    }
}

/// `sum_d ((x_d - z_d) * inv_ls_d)^2` with a fixed four-lane summation order.
///
/// Every kernel entry in the crate goes through this function, so a matrix entry
/// and the matching pointwise evaluation agree bit for bit.
#[inline]
pub(crate) fn scaled_sq_dist(x: &[f64], z: &[f64], inv_ls: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let xs = x.chunks_exact(4);
    let zs = z.chunks_exact(4);
    let ls = inv_ls.chunks_exact(4);
    let (xr, zr, lr) = (xs.remainder(), zs.remainder(), ls.remainder());
    for ((xc, zc), lc) in xs.zip(zs).zip(ls) {
        for k in 0..4 {
            let t = (xc[k] - zc[k]) * lc[k];
            acc[k] += t * t;
        }
    }
    let mut tail = 0.0;
    for ((a, b), l) in xr.iter().zip(zr).zip(lr) {
        let t = (a - b) * l;
        tail += t * t;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn gaussian(sq_dist: f64) -> f64 {
    (-0.5 * sq_dist).exp()
}

pub fn kernel_eval(x: &[f64], z: &[f64], params: &KernelParams) -> Result<f64> {
    check_dim(params.dim(), x.len())?;
    check_dim(params.dim(), z.len())?;
    Ok(gaussian(scaled_sq_dist(x, z, &params.inverse_lengthscales())))
}

/// Kernel matrix with entry `(i, j) = k(a_i, b_j)`.
pub fn kernel_matrix(a: &FeatureMatrix, b: &FeatureMatrix, params: &KernelParams) -> Result<DMatrix<f64>> {
    check_dim(params.dim(), a.n_cols())?;
    check_dim(params.dim(), b.n_cols())?;
    let inv = params.inverse_lengthscales();
    let mut k = DMatrix::zeros(a.n_rows(), b.n_rows());
    for (j, zj) in b.rows().enumerate() {
        let col = k.column_mut(j);
        for (out, xi) in col.into_iter().zip(a.rows()) {
            *out = gaussian(scaled_sq_dist(xi, zj, &inv));
        }
    }
    Ok(k)
}

/// Symmetric kernel matrix of a set with itself; the lower triangle is mirrored.
pub fn gram_matrix(a: &FeatureMatrix, params: &KernelParams) -> Result<DMatrix<f64>> {
    check_dim(params.dim(), a.n_cols())?;
    let inv = params.inverse_lengthscales();
    let n = a.n_rows();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        let zj = a.row(j);
        k[(j, j)] = 1.0;
        for i in 0..j {
            let v = gaussian(scaled_sq_dist(a.row(i), zj, &inv));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}
