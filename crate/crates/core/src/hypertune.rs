//! Gradient-based tuning of kernel lengthscales, inducing features and ridge weight.
//!
//! The objective is the upper bound
//!
//! ```text
//! L_tune = 2/n Tr((K~ + n lambda R)^-1 K~) + 2/(n lambda) Tr(K - K~) L_data + 2 L_data
//! L_data = 1/n ||g(X) - Y||^2 + lambda ||g||_H^2
//! ```
//!
//! with `K~ = K_nm K_mm^+ K_nm^T` and `R` either the full kernel `K` or the
//! identity. Gradients are derived by hand in reverse mode and flow through the
//! coefficient solve and the pseudo-inverse of `K_mm`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, invalid, Error, Result};
use crate::features::FeatureMatrix;
use crate::hutchinson::rademacher_probes;
use crate::kernel::{gram_matrix, KernelParams};
use crate::nystrom::{self, at_b, factor_spd, predict, rkhs_norm_sq, solve_ridge, NystromModel, RidgeSolution, TrainingSet};

pub use crate::nystrom::PINV_CUTOFF;

/// Largest training set for which [`TraceMode::Auto`] computes the trace exactly.
pub const AUTO_EXACT_LIMIT: usize = 4096;

/// Probe count used by [`TraceMode::Auto`] on large training sets.
pub const AUTO_PROBES: usize = 20;

/// Regularizer inside the inverse of the first trace term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceRegularizer {
    /// `(K~ + n lambda K)^-1 K~`; needs the dense `n x n` kernel.
    Kernel,
    /// `(K~ + n lambda I)^-1 K~`; reduces to `m x m` algebra.
    #[default]
    Identity,
}

/// How the first trace term is evaluated during a tuning run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceMode {
    /// Exact up to [`AUTO_EXACT_LIMIT`] training rows, stochastic with [`AUTO_PROBES`] probes above.
    #[default]
    Auto,
    Exact,
    Stochastic { probes: usize },
}

impl TraceMode {
    fn estimator(self, n: usize, seed: u64) -> TraceEstimator {
        match self {
            TraceMode::Exact => TraceEstimator::Exact,
            TraceMode::Auto if n <= AUTO_EXACT_LIMIT => TraceEstimator::Exact,
            TraceMode::Auto => TraceEstimator::Hutchinson { probes: AUTO_PROBES, seed },
            TraceMode::Stochastic { probes } => TraceEstimator::Hutchinson { probes, seed },
        }
    }
}

/// A single evaluation's trace estimator; probe vectors are fixed by `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEstimator {
    Exact,
    Hutchinson { probes: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TuneObjective {
    pub estimator: TraceEstimator,
    pub regularizer: TraceRegularizer,
}

impl TuneObjective {
    pub fn exact(regularizer: TraceRegularizer) -> Self {
        Self { estimator: TraceEstimator::Exact, regularizer }
    }
}

impl Default for TuneObjective {
    fn default() -> Self {
        Self::exact(TraceRegularizer::default())
    }
}

/// Gradient of the tuning loss with respect to the log-lengthscales, every
/// inducing feature entry (row-major, `m x N_F`) and the log ridge weight.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneGradient {
    pub log_lengthscales: Vec<f64>,
    pub inducing: Vec<f64>,
    pub log_lambda: f64,
}

impl TuneGradient {
    fn is_finite(&self) -> bool {
        self.log_lambda.is_finite()
            && self.log_lengthscales.iter().all(|v| v.is_finite())
            && self.inducing.iter().all(|v| v.is_finite())
    }
}

/// Value of the tuning loss together with the quantities computed on the way.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    pub data_loss: f64,
    pub train_mse: f64,
    pub gradient: Option<TuneGradient>,
}

/// `L_data = (1/n) ||g(X) - Y||^2 + lambda ||g||_H^2` for a fitted model.
pub fn data_loss(model: &NystromModel, train: &TrainingSet) -> Result<f64> {
    check_dim(model.dim(), train.features().n_cols())?;
    let pred = predict(model, train.features())?;
    let sse: f64 = pred.iter().zip(train.labels()).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok(sse / train.len() as f64 + model.params().lambda() * rkhs_norm_sq(model))
}

pub fn tune_loss(
    train: &TrainingSet,
    inducing: &FeatureMatrix,
    params: &KernelParams,
    objective: &TuneObjective,
) -> Result<f64> {
    evaluate(train, inducing, params, objective, false).map(|e| e.loss)
}

/// Loss and its exact gradient (for the realized probe set in stochastic mode).
pub fn tune_grad(
    train: &TrainingSet,
    inducing: &FeatureMatrix,
    params: &KernelParams,
    objective: &TuneObjective,
) -> Result<(f64, TuneGradient)> {
    let ev = evaluate(train, inducing, params, objective, true)?;
    Ok((ev.loss, ev.gradient.expect("gradient requested")))
}

/// Reverse-mode adjoints of the intermediate matrices.
struct Adjoints {
    knm: DMatrix<f64>,
    kmm: DMatrix<f64>,
    pinv: DMatrix<f64>,
    gram: DMatrix<f64>,
    knn: Option<DMatrix<f64>>,
    // direct dependence on lambda, and on c = n lambda
    lambda: f64,
    c: f64,
}

struct PseudoInverse {
    pinv: DMatrix<f64>,
    projector: DMatrix<f64>,
}

fn pseudo_inverse(kmm: &DMatrix<f64>) -> PseudoInverse {
    let m = kmm.nrows();
    let eig = kmm.clone().symmetric_eigen();
    let cutoff = PINV_CUTOFF * eig.eigenvalues.max();
    let kept: Vec<usize> = (0..m).filter(|&k| eig.eigenvalues[k] > cutoff).collect();
    let mut basis = DMatrix::zeros(m, kept.len());
    let mut scaled = DMatrix::zeros(m, kept.len());
    for (col, &k) in kept.iter().enumerate() {
        let u = eig.eigenvectors.column(k);
        basis.set_column(col, &u);
        scaled.set_column(col, &(u / eig.eigenvalues[k].sqrt()));
    }
    PseudoInverse { pinv: &scaled * scaled.transpose(), projector: &basis * basis.transpose() }
}

/// Evaluates the tuning loss, and its gradient when `want_grad` is set.
pub fn evaluate(
    train: &TrainingSet,
    inducing: &FeatureMatrix,
    params: &KernelParams,
    objective: &TuneObjective,
    want_grad: bool,
) -> Result<Evaluation> {
    let n = train.len();
    let m = inducing.n_rows();
    let lambda = params.lambda();
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("ridge weight must be positive, got {lambda}")));
    }
    let nf = n as f64;
    let c = nf * lambda;

    let RidgeSolution { knm, kmm, gram, chol, beta } = solve_ridge(train, inducing, params)?;
    let y = DVector::from_column_slice(train.labels());
    let residual = &knm * &beta - &y;
    let train_mse = residual.norm_squared() / nf;
    let kmm_beta = &kmm * &beta;
    let rkhs = beta.dot(&kmm_beta).max(0.0);
    let l_data = train_mse + lambda * rkhs;

    let PseudoInverse { pinv, projector } = pseudo_inverse(&kmm);
    let tr_nystrom = pinv.component_mul(&gram).sum();
    let gap_raw = nf - tr_nystrom;
    let gap = gap_raw.max(0.0);

    let mut adj = want_grad.then(|| Adjoints {
        knm: DMatrix::zeros(n, m),
        kmm: DMatrix::zeros(m, m),
        pinv: DMatrix::zeros(m, m),
        gram: DMatrix::zeros(m, m),
        knn: None,
        lambda: 0.0,
        c: 0.0,
    });

    let trace_weight = 2.0 / nf;
    let first_trace = {
        let ctx = TraceContext { knm: &knm, gram: &gram, pinv: &pinv, c, weight: trace_weight };
        match (objective.regularizer, objective.estimator) {
            (TraceRegularizer::Identity, TraceEstimator::Exact) => identity_exact(&ctx, adj.as_mut())?,
            (TraceRegularizer::Identity, TraceEstimator::Hutchinson { probes, seed }) => {
                identity_stochastic(&ctx, &rademacher_probes(n, check_probes(probes)?, seed), adj.as_mut())?
            }
            (TraceRegularizer::Kernel, estimator) => {
                let knn = gram_matrix(train.features(), params)?;
                let probes = match estimator {
                    TraceEstimator::Exact => None,
                    TraceEstimator::Hutchinson { probes, seed } => {
                        Some(rademacher_probes(n, check_probes(probes)?, seed))
                    }
                };
                kernel_trace(&ctx, &knn, probes.as_ref(), adj.as_mut())?
            }
        }
    };

    let loss = trace_weight * first_trace + 2.0 / (nf * lambda) * gap * l_data + 2.0 * l_data;

    let gradient = match adj {
        None => None,
        Some(mut adj) => {
            let data_weight = 2.0 * gap / (nf * lambda) + 2.0;
            let gap_weight = if gap_raw > 0.0 { 2.0 * l_data / (nf * lambda) } else { 0.0 };
            adj.lambda -= 2.0 * gap * l_data / (nf * lambda * lambda);

            // Tr(K - K~) = n - Tr(K_mm^+ K_nm^T K_nm)
            adj.pinv -= &gram * gap_weight;
            adj.gram -= &pinv * gap_weight;

            // L_data through the residual, the RKHS norm and beta
            let resid_bar = &residual * (data_weight * 2.0 / nf);
            let rkhs_bar = data_weight * lambda;
            adj.lambda += data_weight * rkhs;
            let beta_bar = knm.tr_mul(&resid_bar) + &kmm_beta * (2.0 * rkhs_bar);
            adj.knm.ger(1.0, &resid_bar, &beta, 1.0);
            adj.kmm.ger(rkhs_bar, &beta, &beta, 1.0);

            // beta = H^-1 K_nm^T Y with H = K_nm^T K_nm + c K_mm
            let g = chol.solve(&beta_bar);
            let h_bar = -(&g * beta.transpose());
            adj.knm.ger(1.0, &y, &g, 1.0);
            adj.gram += &h_bar;
            adj.kmm += &h_bar * c;
            adj.c += h_bar.component_mul(&kmm).sum();

            // gram = K_nm^T K_nm
            let gram_sym = &adj.gram + adj.gram.transpose();
            adj.knm += &knm * gram_sym;

            // pinv = K_mm^+, constant-rank derivative
            let pb = &adj.pinv;
            let pinv2 = &pinv * &pinv;
            let complement = DMatrix::identity(m, m) - &projector;
            adj.kmm -= &pinv * pb * &pinv;
            adj.kmm += &pinv2 * pb * &complement;
            adj.kmm += &complement * pb * &pinv2;

            Some(contract(train.features(), inducing, params, &knm, &kmm, adj))
        }
    };

    Ok(Evaluation { loss, data_loss: l_data, train_mse, gradient })
}

fn check_probes(probes: usize) -> Result<usize> {
    if probes == 0 {
        Err(invalid("stochastic trace needs at least one probe"))
    } else {
        Ok(probes)
    }
}

struct TraceContext<'a> {
    knm: &'a DMatrix<f64>,
    gram: &'a DMatrix<f64>,
    pinv: &'a DMatrix<f64>,
    c: f64,
    weight: f64,
}

/// `Tr((K~ + cI)^-1 K~) = m - c Tr(A^-1)` with `A = K_nm^T K_nm K_mm^+ + cI`.
fn identity_exact(ctx: &TraceContext, adj: Option<&mut Adjoints>) -> Result<f64> {
    let m = ctx.pinv.nrows();
    let a = ctx.gram * ctx.pinv + DMatrix::identity(m, m) * ctx.c;
    let a_inv = a.lu().try_inverse().ok_or(Error::Singular { jitter: 0.0 })?;
    let value = m as f64 - ctx.c * a_inv.trace();
    if let Some(adj) = adj {
        let a_inv2 = &a_inv * &a_inv;
        let s = ctx.weight * ctx.c;
        adj.gram += (ctx.pinv * &a_inv2).transpose() * s;
        adj.pinv += (&a_inv2 * ctx.gram).transpose() * s;
        adj.c += ctx.weight * (ctx.c * a_inv2.trace() - a_inv.trace());
    }
    Ok(value)
}

/// Hutchinson estimate of `Tr((K~ + cI)^-1 K~)` using `v^T K_nm K_mm^+ A^-1 K_nm^T v`.
fn identity_stochastic(ctx: &TraceContext, probes: &DMatrix<f64>, adj: Option<&mut Adjoints>) -> Result<f64> {
    let m = ctx.pinv.nrows();
    let s = probes.ncols() as f64;
    let a = ctx.gram * ctx.pinv + DMatrix::identity(m, m) * ctx.c;
    let lu = a.clone().lu();
    let u = at_b(ctx.knm, probes);
    let w2 = lu.solve(&u).ok_or(Error::Singular { jitter: 0.0 })?;
    let pu = ctx.pinv * &u;
    let value = pu.component_mul(&w2).sum() / s;
    if let Some(adj) = adj {
        let w1 = a.transpose().lu().solve(&pu).ok_or(Error::Singular { jitter: 0.0 })?;
        let k = ctx.weight / s;
        let pw2 = ctx.pinv * &w2;
        let u_bar = &pw2 + &w1;
        adj.knm += probes * u_bar.transpose() * k;
        adj.pinv += (&u * w2.transpose() - ctx.gram * &w1 * w2.transpose()) * k;
        adj.gram -= &w1 * pw2.transpose() * k;
        adj.c -= k * w1.component_mul(&w2).sum();
    }
    Ok(value)
}

/// `Tr((K~ + cK)^-1 K~)` with the dense kernel, exactly or with fixed probes.
fn kernel_trace(
    ctx: &TraceContext,
    knn: &DMatrix<f64>,
    probes: Option<&DMatrix<f64>>,
    adj: Option<&mut Adjoints>,
) -> Result<f64> {
    let kp = ctx.knm * ctx.pinv;
    let k_tilde = &kp * ctx.knm.transpose();
    let system = &k_tilde + knn * ctx.c;
    let (chol, _) = factor_spd(&system)?;
    match probes {
        None => {
            let m_inv = chol.inverse();
            let value = m_inv.component_mul(&k_tilde).sum();
            if let Some(adj) = adj {
                let q = &m_inv * &k_tilde * &m_inv;
                let w_tilde = (&m_inv - &q) * ctx.weight;
                adj.knm += (&w_tilde + w_tilde.transpose()) * &kp;
                adj.pinv += at_b(ctx.knm, &(&w_tilde * ctx.knm));
                adj.c -= ctx.weight * q.component_mul(knn).sum();
                adj.knn = Some(q * (-ctx.weight * ctx.c));
            }
            Ok(value)
        }
        Some(v) => {
            let s = v.ncols() as f64;
            let av = chol.solve(v);
            let ktv = &k_tilde * v;
            let b = chol.solve(&ktv);
            let value = av.component_mul(&ktv).sum() / s;
            if let Some(adj) = adj {
                let k = ctx.weight / s;
                let vb = v - &b;
                // W~ = k AV (V - B)^T, applied in factored form
                let left = &av * at_b(&vb, &kp) + &vb * at_b(&av, &kp);
                adj.knm += left * k;
                adj.pinv += (at_b(ctx.knm, &av) * at_b(&vb, ctx.knm)) * k;
                adj.c -= k * av.component_mul(&(knn * &b)).sum();
                adj.knn = Some(&av * b.transpose() * (-k * ctx.c));
            }
            Ok(value)
        }
    }
}

/// Maps matrix adjoints onto log-lengthscales, inducing entries and log lambda.
fn contract(
    x: &FeatureMatrix,
    z: &FeatureMatrix,
    params: &KernelParams,
    knm: &DMatrix<f64>,
    kmm: &DMatrix<f64>,
    adj: Adjoints,
) -> TuneGradient {
    let dim = params.dim();
    let n = x.n_rows();
    let m = z.n_rows();
    let inv2: Vec<f64> = params.inverse_lengthscales().iter().map(|v| v * v).collect();
    let mut g_ls = vec![0.0; dim];
    let mut g_z = vec![0.0; m * dim];

    // centering keeps the expanded squares well conditioned
    let mut mean = vec![0.0; dim];
    for row in x.rows() {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);
    let xc = DMatrix::from_fn(n, dim, |i, d| x.row(i)[d] - mean[d]);
    let zc = DMatrix::from_fn(m, dim, |j, d| z.row(j)[d] - mean[d]);

    // K_nm: sum_ij W_ij (x_id - z_jd)^2 and sum_i W_ij (x_id - z_jd)
    let w = adj.knm.component_mul(knm);
    let row_sum = w.column_sum();
    let col_sum = w.row_sum_tr();
    let wz = &w * &zc;
    let wtx = at_b(&w, &xc);
    for d in 0..dim {
        let mut acc = 0.0;
        for i in 0..n {
            let xv = xc[(i, d)];
            acc += xv * (xv * row_sum[i] - 2.0 * wz[(i, d)]);
        }
        for j in 0..m {
            let zv = zc[(j, d)];
            acc += zv * zv * col_sum[j];
            g_z[j * dim + d] += inv2[d] * (wtx[(j, d)] - col_sum[j] * zv);
        }
        g_ls[d] += inv2[d] * acc;
    }

    // K_mm, both arguments move with Z
    for a in 0..m {
        for b in 0..m {
            if a == b {
                continue;
            }
            let wab = adj.kmm[(a, b)] * kmm[(a, b)];
            if wab == 0.0 {
                continue;
            }
            let (za, zb) = (z.row(a), z.row(b));
            for d in 0..dim {
                let diff = za[d] - zb[d];
                g_ls[d] += wab * diff * diff * inv2[d];
                g_z[a * dim + d] -= wab * diff * inv2[d];
                g_z[b * dim + d] += wab * diff * inv2[d];
            }
        }
    }

    // dense K over the training rows (kernel regularizer only)
    if let Some(knn_bar) = &adj.knn {
        let knn = gram_matrix(x, params).expect("dimensions validated");
        for j in 0..n {
            let xj = x.row(j);
            for i in 0..n {
                if i == j {
                    continue;
                }
                let wij = knn_bar[(i, j)] * knn[(i, j)];
                let xi = x.row(i);
                for d in 0..dim {
                    let diff = xi[d] - xj[d];
                    g_ls[d] += wij * diff * diff * inv2[d];
                }
            }
        }
    }

    let lambda = params.lambda();
    let g_log_lambda = lambda * (adj.lambda + n as f64 * adj.c);
    TuneGradient { log_lengthscales: g_ls, inducing: g_z, log_lambda: g_log_lambda }
}

/// Hyperparameters of a tuning run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub trace_mode: TraceMode,
    pub trace_regularizer: TraceRegularizer,
    pub tune_theta: bool,
    pub tune_z: bool,
    pub tune_lambda: bool,
    pub seed: u64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            learning_rate: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            trace_mode: TraceMode::Auto,
            trace_regularizer: TraceRegularizer::Identity,
            tune_theta: true,
            tune_z: true,
            tune_lambda: true,
            seed: 0,
        }
    }
}

impl TuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(invalid("moment decay rates must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid("optimizer epsilon must be positive"));
        }
        if let TraceMode::Stochastic { probes: 0 } = self.trace_mode {
            return Err(invalid("stochastic trace needs at least one probe"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss_tune: f64,
    pub train_mse: f64,
    pub ms: f64,
}

/// Per-iterate history of a tuning run. Entry `k` describes the hyperparameters
/// after `k` descent steps; entry 0 is the initialization.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TuneTrace {
    pub per_step: Vec<StepRecord>,
    pub best_step: usize,
}

impl TuneTrace {
    pub const CSV_HEADER: &'static str = "step,loss_tune,train_mse,ms";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.per_step {
            out.push_str(&format!("{},{},{},{:.3}\n", r.step, r.loss_tune, r.train_mse, r.ms));
        }
        out
    }

    pub fn best(&self) -> Option<&StepRecord> {
        self.per_step.get(self.best_step)
    }
}

/// Adaptive-moment optimizer over one flat parameter vector.
struct Adam {
    first: Vec<f64>,
    second: Vec<f64>,
    t: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    fn new(len: usize, cfg: &TuneConfig) -> Self {
        Self {
            first: vec![0.0; len],
            second: vec![0.0; len],
            t: 0,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.epsilon,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], active: &[bool]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for k in 0..params.len() {
            if !active[k] {
                continue;
            }
            let g = grad[k];
            self.first[k] = self.beta1 * self.first[k] + (1.0 - self.beta1) * g;
            self.second[k] = self.beta2 * self.second[k] + (1.0 - self.beta2) * g * g;
            let mhat = self.first[k] / c1;
            let vhat = self.second[k] / c2;
            params[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Runs `cfg.steps` descent steps on the tuning loss and returns the model
/// re-solved at the iterate with the lowest training MSE.
pub fn tune(
    train: &TrainingSet,
    init_inducing: &FeatureMatrix,
    init_params: &KernelParams,
    cfg: &TuneConfig,
) -> Result<(NystromModel, TuneTrace)> {
    cfg.validate()?;
    let m = init_inducing.n_rows();
    let dim = init_params.dim();
    if m == 0 {
        return Err(invalid("at least one inducing feature is required"));
    }
    if m > train.len() {
        return Err(invalid(format!("{m} inducing features exceed {} training rows", train.len())));
    }
    check_dim(dim, init_inducing.n_cols())?;
    check_dim(dim, train.features().n_cols())?;

    // flat layout: [log lengthscales | inducing (row-major) | log lambda]
    let z_off = dim;
    let lam_off = dim + m * dim;
    let mut flat = Vec::with_capacity(lam_off + 1);
    flat.extend_from_slice(init_params.log_lengthscales());
    flat.extend_from_slice(init_inducing.as_slice());
    flat.push(init_params.log_lambda());
    let mut active = vec![cfg.tune_theta; dim];
    active.extend(std::iter::repeat_n(cfg.tune_z, m * dim));
    active.push(cfg.tune_lambda);

    let mut adam = Adam::new(flat.len(), cfg);
    let mut seeds = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = TuneTrace::default();
    let mut inducing = init_inducing.clone();
    let mut best: Option<(f64, KernelParams, FeatureMatrix)> = None;
    let mut grad_flat = vec![0.0; flat.len()];

    for step in 0..=cfg.steps {
        let started = Instant::now();
        let params = KernelParams::from_log(flat[..dim].to_vec(), flat[lam_off])?;
        inducing.as_mut_slice().copy_from_slice(&flat[z_off..lam_off]);
        let objective = TuneObjective {
            estimator: cfg.trace_mode.estimator(train.len(), seeds.next_u64()),
            regularizer: cfg.trace_regularizer,
        };
        let want_grad = step < cfg.steps && active.iter().any(|a| *a);
        let outcome = evaluate(train, &inducing, &params, &objective, want_grad);
        let usable = match &outcome {
            Ok(ev) => {
                ev.loss.is_finite()
                    && ev.train_mse.is_finite()
                    && ev.gradient.as_ref().is_none_or(TuneGradient::is_finite)
            }
            Err(_) => false,
        };
        let (loss, mse) = match &outcome {
            Ok(ev) => (ev.loss, ev.train_mse),
            Err(_) => (f64::NAN, f64::NAN),
        };
        if !usable {
            if let Err(e) = &outcome {
                log::warn!("tuning stopped at step {step}: {e}");
            } else {
                log::warn!("tuning stopped at step {step}: non-finite loss or gradient");
            }
            trace.per_step.push(StepRecord { step, loss_tune: loss, train_mse: mse, ms: ms_since(started) });
            break;
        }
        let ev = outcome?;
        if best.as_ref().is_none_or(|(b, _, _)| ev.train_mse < *b) {
            best = Some((ev.train_mse, params.clone(), inducing.clone()));
            trace.best_step = step;
        }
        if let Some(g) = ev.gradient {
            grad_flat[..dim].copy_from_slice(&g.log_lengthscales);
            grad_flat[z_off..lam_off].copy_from_slice(&g.inducing);
            grad_flat[lam_off] = g.log_lambda;
            adam.step(&mut flat, &grad_flat, &active);
        }
        trace.per_step.push(StepRecord { step, loss_tune: ev.loss, train_mse: ev.train_mse, ms: ms_since(started) });
    }

    let Some((_, params, z)) = best else {
        return Err(Error::TuningDiverged(Box::new(trace)));
    };
    let model = nystrom::solve(train, &z, &params)?;
    Ok((model, trace))
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}
