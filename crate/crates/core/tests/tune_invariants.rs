//! Properties of the tuning objective and the descent loop.

mod common;

use common::{ard_gaussian, rng, tune_instance, uniform_rows};
use nalgebra::{DMatrix, DVector};
use nkrr_core::hutchinson::hutchinson_trace;
use nkrr_core::hypertune::{data_loss, tune_loss, TraceEstimator, TuneObjective};
use nkrr_core::nystrom::{rkhs_norm_sq, solve, training_mse};
use nkrr_core::pipeline::init_inducing;
use nkrr_core::{synthetic, tune, FeatureMatrix, KernelParams, NystromModel, TraceMode, TraceRegularizer, TrainingSet, TuneConfig};
use rand::Rng;

fn exact_cfg(steps: usize) -> TuneConfig {
    TuneConfig { steps, trace_mode: TraceMode::Exact, trace_regularizer: TraceRegularizer::Kernel, ..TuneConfig::default() }
}

#[test]
fn full_inducing_set_collapses_the_bound() {
    for seed in 0..10u64 {
        let mut r = rng(seed);
        let n = 12 + seed as usize;
        let x = uniform_rows(&mut r, n, 3, -1.0, 1.0);
        let y: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let train = TrainingSet::new(x, y).unwrap();
        let params = KernelParams::new(&[0.4, 0.4, 0.4], 10f64.powf(r.random_range(-3.0..-1.0))).unwrap();
        let loss = tune_loss(&train, train.features(), &params, &TuneObjective::exact(TraceRegularizer::Kernel)).unwrap();
        let model = solve(&train, train.features(), &params).unwrap();
        let nl = n as f64 * params.lambda();
        let expected = 2.0 / (1.0 + nl) + 2.0 * data_loss(&model, &train).unwrap();
        assert!((loss - expected).abs() <= 1e-8 * expected, "seed {seed}: {loss} vs {expected}");
    }
}

#[test]
fn single_point_closed_form() {
    let train = TrainingSet::new(FeatureMatrix::new(vec![0.3, -0.2], 1, 2).unwrap(), vec![1.0]).unwrap();
    let params = KernelParams::new(&[1.0, 1.0], 1.0).unwrap();
    let model = solve(&train, train.features(), &params).unwrap();
    assert!((model.coefficients()[0] - 0.5).abs() < 1e-12);
    assert!((data_loss(&model, &train).unwrap() - 0.5).abs() < 1e-12);
    let loss = tune_loss(&train, train.features(), &params, &TuneObjective::exact(TraceRegularizer::Kernel)).unwrap();
    assert!((loss - 2.0).abs() < 1e-12, "{loss}");
}

#[test]
fn data_loss_matches_a_scalar_reimplementation() {
    let inst = tune_instance(11, 20, 4, 3);
    let model = solve(&inst.train, &inst.inducing, &inst.params).unwrap();
    let ls = inst.params.lengthscales();
    let beta = model.coefficients();
    let z = model.inducing();
    let mut sq = 0.0;
    for i in 0..20 {
        let x = inst.train.features().row(i);
        let g: f64 = (0..4).map(|j| beta[j] * ard_gaussian(x, z.row(j), &ls)).sum();
        sq += (g - inst.train.labels()[i]).powi(2);
    }
    let mut norm = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            norm += beta[a] * beta[b] * ard_gaussian(z.row(a), z.row(b), &ls);
        }
    }
    let oracle = sq / 20.0 + inst.params.lambda() * norm;
    let ours = data_loss(&model, &inst.train).unwrap();
    assert!((ours - oracle).abs() <= 1e-12 * oracle, "{ours} vs {oracle}");
    assert!((rkhs_norm_sq(&model) - norm).abs() <= 1e-12 * norm);

    let zero = NystromModel::new(z.clone(), vec![0.0; 4], inst.params.clone()).unwrap();
    let mean_sq = inst.train.labels().iter().map(|y| y * y).sum::<f64>() / 20.0;
    assert!((data_loss(&zero, &inst.train).unwrap() - mean_sq).abs() < 1e-12);
    assert_eq!(rkhs_norm_sq(&zero), 0.0);
}

#[test]
fn many_probes_approach_the_exact_trace() {
    let inst = tune_instance(21, 64, 8, 3);
    for regularizer in [TraceRegularizer::Kernel, TraceRegularizer::Identity] {
        let exact = tune_loss(&inst.train, &inst.inducing, &inst.params, &TuneObjective::exact(regularizer)).unwrap();
        let objective = TuneObjective { estimator: TraceEstimator::Hutchinson { probes: 2000, seed: 5 }, regularizer };
        let est = tune_loss(&inst.train, &inst.inducing, &inst.params, &objective).unwrap();
        assert!((est - exact).abs() <= 0.02 * exact, "{regularizer:?}: {est} vs {exact}");
    }
}

fn random_psd(n: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    let b = DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
    &b * b.transpose()
}

#[test]
fn hutchinson_is_unbiased_on_psd_matrices() {
    let n = 256;
    let s = 10_000;
    let a = random_psd(n, 3);
    let exact = a.trace();
    // variance of one Rademacher probe: 2 (||A||_F^2 - sum a_ii^2)
    let off: f64 = a.iter().map(|v| v * v).sum::<f64>() - a.diagonal().iter().map(|v| v * v).sum::<f64>();
    let sigma = (2.0 * off).sqrt();
    let est = hutchinson_trace(n, s, 9, |v: &DVector<f64>| &a * v);
    assert!((est - exact).abs() <= 3.0 * sigma / (s as f64).sqrt(), "{est} vs {exact}, sigma {sigma}");
}

#[test]
fn zero_steps_is_the_plain_solve() {
    let inst = tune_instance(31, 40, 6, 2);
    let (model, trace) = tune(&inst.train, &inst.inducing, &inst.params, &exact_cfg(0)).unwrap();
    let direct = solve(&inst.train, &inst.inducing, &inst.params).unwrap();
    assert_eq!(model, direct);
    assert_eq!(trace.per_step.len(), 1);
    assert_eq!(trace.best_step, 0);
}

#[test]
fn best_iterate_is_the_training_mse_argmin() {
    for seed in 0..3 {
        let train = synthetic::ring(200, seed).unwrap();
        let z = init_inducing(&train, 16, seed).unwrap();
        let p = KernelParams::median_heuristic(train.features(), 1e-5, seed).unwrap();
        let cfg = TuneConfig { trace_regularizer: TraceRegularizer::Identity, ..exact_cfg(30) };
        let (model, trace) = tune(&train, &z, &p, &cfg).unwrap();
        let best = trace.best().unwrap();
        for r in &trace.per_step {
            assert!(best.train_mse <= r.train_mse || r.train_mse.is_nan());
        }
        assert!(trace.per_step.iter().take(trace.best_step).all(|r| r.train_mse > best.train_mse));
        assert!(best.train_mse <= trace.per_step[0].train_mse);
        let refit = training_mse(&model, &train).unwrap();
        assert!((refit - best.train_mse).abs() <= 1e-6 * best.train_mse.max(1e-12), "{refit} vs {}", best.train_mse);
    }
}

#[test]
fn runs_are_reproducible() {
    let inst = tune_instance(41, 48, 6, 3);
    for trace_mode in [TraceMode::Exact, TraceMode::Stochastic { probes: 4 }] {
        let cfg = TuneConfig { steps: 15, trace_mode, seed: 9, trace_regularizer: TraceRegularizer::Kernel, ..TuneConfig::default() };
        let (a, ta) = tune(&inst.train, &inst.inducing, &inst.params, &cfg).unwrap();
        let (b, tb) = tune(&inst.train, &inst.inducing, &inst.params, &cfg).unwrap();
        assert_eq!(a, b);
        let losses = |t: &nkrr_core::TuneTrace| t.per_step.iter().map(|r| (r.loss_tune.to_bits(), r.train_mse.to_bits())).collect::<Vec<_>>();
        assert_eq!(losses(&ta), losses(&tb));
    }
}

#[test]
fn disabled_groups_stay_put() {
    let inst = tune_instance(51, 48, 6, 3);
    let base = exact_cfg(10);
    let (m, _) = tune(&inst.train, &inst.inducing, &inst.params, &TuneConfig { tune_theta: false, ..base.clone() }).unwrap();
    assert_eq!(m.params().log_lengthscales(), inst.params.log_lengthscales());

    let (m, _) = tune(&inst.train, &inst.inducing, &inst.params, &TuneConfig { tune_z: false, ..base.clone() }).unwrap();
    assert_eq!(m.inducing(), &inst.inducing);

    let (m, _) = tune(&inst.train, &inst.inducing, &inst.params, &TuneConfig { tune_lambda: false, ..base }).unwrap();
    assert_eq!(m.params().log_lambda().to_bits(), inst.params.log_lambda().to_bits());
}

#[test]
fn trace_csv_layout() {
    let inst = tune_instance(61, 20, 3, 2);
    let (_, trace) = tune(&inst.train, &inst.inducing, &inst.params, &exact_cfg(3)).unwrap();
    let csv = trace.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step,loss_tune,train_mse,ms");
    assert_eq!(lines.len(), 5);
    assert!(csv.ends_with('\n'));
    for (k, line) in lines[1..].iter().enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 4);
        assert_eq!(cols[0], k.to_string());
        assert!(cols[1..].iter().all(|c| c.parse::<f64>().is_ok()));
    }
}
