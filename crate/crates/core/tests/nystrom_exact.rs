//! The Nyström solver against full kernel ridge regression and its limits.

mod common;

use common::{dense_krr_predict, rng, uniform_rows};
use nkrr_core::nystrom::{predict, solve, training_mse};
use nkrr_core::{FeatureMatrix, KernelParams, TrainingSet};
use proptest::prelude::*;
use rand::Rng;

fn random_problem(seed: u64, n: usize, dim: usize) -> (TrainingSet, Vec<f64>, f64) {
    let mut r = rng(seed);
    let x = uniform_rows(&mut r, n, dim, -1.0, 1.0);
    let y = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
    let ls = (0..dim).map(|_| r.random_range(0.3..1.5) * (dim as f64).sqrt()).collect();
    let lambda = 10f64.powf(r.random_range(-4.0..-2.0));
    (TrainingSet::new(x, y).unwrap(), ls, lambda)
}

#[test]
fn full_inducing_set_reproduces_exact_krr() {
    let mut worst = 0.0f64;
    for seed in 0..25u64 {
        let n = 20 + (seed as usize * 37) % 181;
        let dim = 1 + (seed as usize * 5) % 16;
        let (train, ls, lambda) = random_problem(seed, n, dim);
        let params = KernelParams::new(&ls, lambda).unwrap();
        let model = solve(&train, train.features(), &params).unwrap();
        let queries = uniform_rows(&mut rng(1000 + seed), 50, dim, -1.2, 1.2);
        let ours = predict(&model, &queries).unwrap();
        let oracle = dense_krr_predict(train.features(), train.labels(), &ls, lambda, &queries);
        for (a, b) in ours.iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst <= 1e-6, "max abs difference {worst:e}");
}

#[test]
fn training_error_grows_with_the_ridge() {
    for seed in 0..5u64 {
        let (train, ls, _) = random_problem(50 + seed, 60, 3);
        let z = train.features().select_rows(&(0..15).collect::<Vec<_>>());
        let mut last = 0.0f64;
        for k in -8..=-1 {
            let params = KernelParams::new(&ls, 10f64.powi(k)).unwrap();
            let mse = training_mse(&solve(&train, &z, &params).unwrap(), &train).unwrap();
            assert!(mse >= last - 1e-10 * last.max(1.0), "seed {seed}: mse {mse} < {last} at lambda 1e{k}");
            last = mse;
        }
    }
}

#[test]
fn vanishing_ridge_interpolates() {
    for seed in 0..5u64 {
        let mut r = rng(70 + seed);
        let n = 30;
        let x = uniform_rows(&mut r, n, 2, -1.0, 1.0);
        let y: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let train = TrainingSet::new(x, y).unwrap();
        let params = KernelParams::new(&[0.3, 0.3], 1e-12).unwrap();
        let model = solve(&train, train.features(), &params).unwrap();
        let fit = predict(&model, train.features()).unwrap();
        let worst = fit.iter().zip(train.labels()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-3, "seed {seed}: residual {worst:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn row_order_does_not_matter(seed in 0u64..1000, shift in 1usize..40) {
        let (train, ls, lambda) = random_problem(seed, 40, 3);
        let params = KernelParams::new(&ls, lambda).unwrap();
        let z = train.features().select_rows(&[0, 5, 9, 13, 21, 30]);
        let order: Vec<usize> = (0..40).map(|i| (i + shift) % 40).collect();
        let permuted = TrainingSet::new(
            train.features().select_rows(&order),
            order.iter().map(|&i| train.labels()[i]).collect(),
        ).unwrap();
        let queries = uniform_rows(&mut rng(seed + 1), 10, 3, -1.0, 1.0);
        let a = predict(&solve(&train, &z, &params).unwrap(), &queries).unwrap();
        let b = predict(&solve(&permuted, &z, &params).unwrap(), &queries).unwrap();
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() <= 1e-10 * u.abs().max(1.0));
        }
    }

    #[test]
    fn predictions_are_linear_in_the_labels(seed in 0u64..1000, scale in -3.0f64..3.0) {
        let (train, ls, lambda) = random_problem(seed, 30, 2);
        let params = KernelParams::new(&ls, lambda).unwrap();
        let z = train.features().select_rows(&[1, 4, 8, 16]);
        let scaled = TrainingSet::new(train.features().clone(), train.labels().iter().map(|y| y * scale).collect()).unwrap();
        let q = FeatureMatrix::new(vec![0.1, -0.2, 0.5, 0.5], 2, 2).unwrap();
        let a = predict(&solve(&train, &z, &params).unwrap(), &q).unwrap();
        let b = predict(&solve(&scaled, &z, &params).unwrap(), &q).unwrap();
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u * scale - v).abs() <= 1e-9 * (u * scale).abs().max(1.0));
        }
    }
}
