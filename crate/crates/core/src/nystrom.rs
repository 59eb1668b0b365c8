//! Nyström kernel ridge regression.
//!
//! With `m` inducing features `Z`, the fitted function is
//! `g(x) = sum_j beta_j k(x, z_j)` where
//! `beta = (K_nm^T K_nm + lambda n K_mm)^-1 K_nm^T Y`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_dim, invalid, Error, Result};
use crate::features::FeatureMatrix;
use crate::kernel::{gaussian, gram_matrix, kernel_matrix, KernelParams};

/// Eigenvalues of `K_mm` below this fraction of the largest are treated as zero.
pub const PINV_CUTOFF: f64 = 1e-10;

/// Relative eigenvalue floor of `K_mm` in [`solve`].
pub const SOLVE_CUTOFF: f64 = 1e-14;

/// Relative diagonal jitter tried, in order, when a symmetric factorization fails.
pub const JITTER_LADDER: [f64; 8] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Regression targets `(X, Y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    features: FeatureMatrix,
    labels: Vec<f64>,
}

impl TrainingSet {
    pub fn new(features: FeatureMatrix, labels: Vec<f64>) -> Result<Self> {
        check_dim(features.n_rows(), labels.len())?;
        if labels.iter().any(|y| !y.is_finite()) {
            return Err(invalid("training labels must be finite"));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }
}

/// The fitted shape function: inducing features, coefficients and kernel parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NystromModel {
    inducing: FeatureMatrix,
    coefficients: Vec<f64>,
    params: KernelParams,
}

impl NystromModel {
    pub fn new(inducing: FeatureMatrix, coefficients: Vec<f64>, params: KernelParams) -> Result<Self> {
        check_dim(inducing.n_rows(), coefficients.len())?;
        check_dim(params.dim(), inducing.n_cols())?;
        if coefficients.iter().any(|b| !b.is_finite()) {
            return Err(invalid("coefficients must be finite"));
        }
        Ok(Self { inducing, coefficients, params })
    }

    pub fn inducing(&self) -> &FeatureMatrix {
        &self.inducing
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn n_inducing(&self) -> usize {
        self.coefficients.len()
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }
}

/// Cholesky factor of `A + j I`, retrying along [`JITTER_LADDER`] scaled by the
/// mean diagonal of `A`.
pub(crate) fn factor_spd(a: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = a.nrows();
    let scale = (a.trace() / n.max(1) as f64).abs().max(1.0);
    for rel in JITTER_LADDER {
        let jitter = rel * scale;
        let mut shifted = a.clone();
        for i in 0..n {
            shifted[(i, i)] += jitter;
        }
        if let Some(ch) = shifted.cholesky() {
            if ch.l_dirty().iter().all(|v| v.is_finite()) {
                return Ok((ch, jitter));
            }
        }
    }
    Err(Error::Singular { jitter: JITTER_LADDER[JITTER_LADDER.len() - 1] * scale })
}

/// `A^T B` through the blocked product; `tr_mul` walks dot products and is
/// an order of magnitude slower on tall matrices.
pub(crate) fn at_b(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.transpose() * b
}

/// Everything produced while solving for `beta`, kept for gradient computations.
pub(crate) struct RidgeSolution {
    pub knm: DMatrix<f64>,
    pub kmm: DMatrix<f64>,
    pub gram: DMatrix<f64>,
    pub chol: Cholesky<f64, Dyn>,
    pub beta: DVector<f64>,
}

pub(crate) fn solve_ridge(train: &TrainingSet, inducing: &FeatureMatrix, params: &KernelParams) -> Result<RidgeSolution> {
    let n = train.len();
    let m = inducing.n_rows();
    if n == 0 {
        return Err(invalid("training set is empty"));
    }
    if m == 0 {
        return Err(invalid("at least one inducing feature is required"));
    }
    check_dim(train.features().n_cols(), inducing.n_cols())?;
    let lambda = params.lambda();
    let knm = kernel_matrix(train.features(), inducing, params)?;
    let kmm = gram_matrix(inducing, params)?;
    let gram = at_b(&knm, &knm);
    let gram = (&gram + gram.transpose()) * 0.5;
    let system = &gram + &kmm * (lambda * n as f64);
    let (chol, jitter) = factor_spd(&system)?;
    let y = DVector::from_column_slice(train.labels());
    let rhs = knm.tr_mul(&y);
    let mut beta = chol.solve(&rhs);
    // one step of iterative refinement on the jittered system
    let mut residual = &rhs - &system * &beta;
    residual.axpy(-jitter, &beta, 1.0);
    beta += chol.solve(&residual);
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Singular { jitter });
    }
    Ok(RidgeSolution { knm, kmm, gram, chol, beta })
}

/// Fits the Nyström KRR coefficients for the given inducing features and parameters.
///
/// Solved in the whitened basis `T = U S^-1/2` of `K_mm = U S U^T`: with
/// `B = K_nm T`, `(B^T B + lambda n I) a = B^T Y` and `beta = T a`. This is the
/// same `beta` whenever `K_mm` is invertible, but the system is conditioned
/// like `B` rather than like `K_nm^T K_nm`. Eigen-directions below
/// [`SOLVE_CUTOFF`] of the largest eigenvalue are dropped.
pub fn solve(train: &TrainingSet, inducing: &FeatureMatrix, params: &KernelParams) -> Result<NystromModel> {
    let n = train.len();
    if n == 0 {
        return Err(invalid("training set is empty"));
    }
    if inducing.n_rows() == 0 {
        return Err(invalid("at least one inducing feature is required"));
    }
    check_dim(train.features().n_cols(), inducing.n_cols())?;
    let knm = kernel_matrix(train.features(), inducing, params)?;
    let eig = gram_matrix(inducing, params)?.symmetric_eigen();
    let cutoff = SOLVE_CUTOFF * eig.eigenvalues.max();
    let kept: Vec<usize> = (0..inducing.n_rows()).filter(|&k| eig.eigenvalues[k] > cutoff).collect();
    let mut whiten = DMatrix::zeros(inducing.n_rows(), kept.len());
    for (col, &k) in kept.iter().enumerate() {
        whiten.set_column(col, &(eig.eigenvectors.column(k) / eig.eigenvalues[k].sqrt()));
    }
    let b = &knm * &whiten;
    let mut system = at_b(&b, &b);
    system = (&system + system.transpose()) * 0.5;
    for i in 0..kept.len() {
        system[(i, i)] += params.lambda() * n as f64;
    }
    let (chol, _) = factor_spd(&system)?;
    let a = chol.solve(&b.tr_mul(&DVector::from_column_slice(train.labels())));
    let beta = &whiten * a;
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular { jitter: 0.0 });
    }
    NystromModel::new(inducing.clone(), beta.as_slice().to_vec(), params.clone())
}

/// Query rows per block in [`predict`].
const PREDICT_BLOCK: usize = 2048;

/// Evaluates `g(q) = sum_j beta_j k(q, z_j)` for every query row.
///
/// Squared distances are expanded as `|q|^2 + |z|^2 - 2 q.z` in lengthscale
/// units, centred on the inducing mean, so the cross term is one matrix product
/// per block of queries.
pub fn predict(model: &NystromModel, queries: &FeatureMatrix) -> Result<Vec<f64>> {
    check_dim(model.dim(), queries.n_cols())?;
    let dim = model.dim();
    let m = model.n_inducing();
    let inv = model.params.inverse_lengthscales();
    let mut center = vec![0.0; dim];
    for z in model.inducing.rows() {
        for (c, v) in center.iter_mut().zip(z) {
            *c += v / m as f64;
        }
    }
    let scaled = |row: &[f64], d: usize| (row[d] - center[d]) * inv[d];
    let zs = DMatrix::from_fn(m, dim, |j, d| scaled(model.inducing.row(j), d));
    let z_norm: Vec<f64> = zs.row_iter().map(|r| r.norm_squared()).collect();

    let mut out = Vec::with_capacity(queries.n_rows());
    for start in (0..queries.n_rows()).step_by(PREDICT_BLOCK) {
        let rows = PREDICT_BLOCK.min(queries.n_rows() - start);
        let qs = DMatrix::from_fn(dim, rows, |d, i| scaled(queries.row(start + i), d));
        // column i holds q_i . z_j for every j, contiguous
        let cross = &zs * &qs;
        for (i, col) in cross.column_iter().enumerate() {
            let q_norm = qs.column(i).norm_squared();
            let mut acc = 0.0;
            for ((c, zn), b) in col.iter().zip(&z_norm).zip(&model.coefficients) {
                acc += b * gaussian((q_norm + zn - 2.0 * c).max(0.0));
            }
            out.push(acc);
        }
    }
    Ok(out)
}

/// Squared RKHS norm `beta^T K_mm beta` of the fitted function, clamped at zero.
pub fn rkhs_norm_sq(model: &NystromModel) -> f64 {
    let kmm = gram_matrix(&model.inducing, &model.params).expect("model dimensions validated at construction");
    let beta = DVector::from_column_slice(&model.coefficients);
    beta.dot(&(&kmm * &beta)).max(0.0)
}

/// Mean squared training error `(1/n) ||g(X) - Y||^2`.
pub fn training_mse(model: &NystromModel, train: &TrainingSet) -> Result<f64> {
    let pred = predict(model, train.features())?;
    let sse: f64 = pred.iter().zip(train.labels()).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok(sse / train.len() as f64)
}
