//! Finite-difference checks of the tuning-loss gradient.

mod common;

use common::{finite_differences, tune_instance, worst_violation, Instance};
use nkrr_core::hypertune::{tune_grad, TraceEstimator, TuneObjective};
use nkrr_core::{FeatureMatrix, KernelParams, TraceRegularizer, TrainingSet};

fn check(inst: &Instance, objective: &TuneObjective) {
    let (_, g) = tune_grad(&inst.train, &inst.inducing, &inst.params, objective).unwrap();
    let mut analytic = g.log_lengthscales.clone();
    analytic.extend_from_slice(&g.inducing);
    analytic.push(g.log_lambda);
    let fd = finite_differences(inst, objective, 1e-4);
    let worst = worst_violation(&analytic, &fd, 1e-4, 1e-8);
    assert!(worst <= 1.0, "{objective:?}: worst violation {worst}\nanalytic {analytic:?}\nfd {fd:?}");
}

#[test]
fn gradient_matches_finite_differences_kernel_exact() {
    for seed in 0..5 {
        check(&tune_instance(seed, 32, 4, 3), &TuneObjective::exact(TraceRegularizer::Kernel));
    }
}

#[test]
fn gradient_matches_finite_differences_identity_exact() {
    for seed in 0..5 {
        check(&tune_instance(100 + seed, 32, 4, 3), &TuneObjective::exact(TraceRegularizer::Identity));
    }
}

#[test]
fn gradient_matches_finite_differences_with_fixed_probes() {
    for regularizer in [TraceRegularizer::Kernel, TraceRegularizer::Identity] {
        for seed in 0..3 {
            let objective =
                TuneObjective { estimator: TraceEstimator::Hutchinson { probes: 5, seed: 77 + seed }, regularizer };
            check(&tune_instance(200 + seed, 32, 5, 3), &objective);
        }
    }
}

#[test]
fn duplicated_training_point_keeps_gradient_finite() {
    let inst = tune_instance(300, 20, 4, 2);
    let mut rows: Vec<Vec<f64>> = inst.train.features().rows().map(|r| r.to_vec()).collect();
    let mut labels = inst.train.labels().to_vec();
    rows.push(rows[3].clone());
    labels.push(labels[3]);
    let train = TrainingSet::new(FeatureMatrix::from_rows(&rows).unwrap(), labels).unwrap();
    for reg in [TraceRegularizer::Kernel, TraceRegularizer::Identity] {
        let (loss, g) = tune_grad(&train, &inst.inducing, &inst.params, &TuneObjective::exact(reg)).unwrap();
        assert!(loss.is_finite());
        assert!(g.log_lengthscales.iter().chain(&g.inducing).chain([&g.log_lambda]).all(|v| v.is_finite()));
    }
}

#[test]
fn descent_reaches_a_stationary_point_in_one_dimension() {
    // one lengthscale on a 1-D sine, lambda and inducing points fixed
    let n = 24;
    let xs: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
    let y: Vec<f64> = xs.iter().map(|x| (3.0 * x).sin()).collect();
    let train = TrainingSet::new(FeatureMatrix::new(xs, n, 1).unwrap(), y).unwrap();
    let z = FeatureMatrix::new(vec![-0.8, -0.3, 0.2, 0.7], 4, 1).unwrap();
    let objective = TuneObjective::exact(TraceRegularizer::Kernel);
    let mut ll = 0.0;
    let mut g = f64::INFINITY;
    for _ in 0..5000 {
        let p = KernelParams::from_log(vec![ll], 1e-3f64.ln()).unwrap();
        g = tune_grad(&train, &z, &p, &objective).unwrap().1.log_lengthscales[0];
        if g.abs() <= 1e-6 {
            break;
        }
        ll -= 0.3 * g;
    }
    assert!(g.abs() <= 1e-6, "gradient {g} at log lengthscale {ll}");
}
