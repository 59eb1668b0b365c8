//! Reference implementations shared by the integration tests. They are kept
//! deliberately naive: scalar loops, brute force and general-purpose solvers.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use nkrr_core::hypertune::{tune_loss, TuneObjective};
use nkrr_core::{FeatureMatrix, KernelParams, TrainingSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type P3 = [f64; 3];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_rows(rng: &mut ChaCha8Rng, n: usize, dim: usize, lo: f64, hi: f64) -> FeatureMatrix {
    let data = (0..n * dim).map(|_| rng.random_range(lo..hi)).collect();
    FeatureMatrix::new(data, n, dim).unwrap()
}

/// `exp(-0.5 * sum_d ((a_d - b_d) / l_d)^2)`, one coordinate at a time.
pub fn ard_gaussian(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    let mut s = 0.0;
    for d in 0..a.len() {
        let t = (a[d] - b[d]) / ls[d];
        s += t * t;
    }
    (-0.5 * s).exp()
}

/// Full kernel ridge regression: `alpha = (K + n lambda I)^-1 y` by LU, then `K_q alpha`.
pub fn dense_krr_predict(x: &FeatureMatrix, y: &[f64], ls: &[f64], lambda: f64, queries: &FeatureMatrix) -> Vec<f64> {
    let n = x.n_rows();
    let mut k = DMatrix::from_fn(n, n, |i, j| ard_gaussian(x.row(i), x.row(j), ls));
    for i in 0..n {
        k[(i, i)] += n as f64 * lambda;
    }
    let alpha = k.lu().solve(&DVector::from_column_slice(y)).expect("regularized kernel is invertible");
    (0..queries.n_rows())
        .map(|q| (0..n).map(|i| alpha[i] * ard_gaussian(queries.row(q), x.row(i), ls)).sum())
        .collect()
}

pub struct Instance {
    pub train: TrainingSet,
    pub inducing: FeatureMatrix,
    pub params: KernelParams,
}

pub fn tune_instance(seed: u64, n: usize, m: usize, dim: usize) -> Instance {
    let mut r = rng(seed);
    let x = uniform_rows(&mut r, n, dim, -1.0, 1.0);
    let y: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
    let z = uniform_rows(&mut r, m, dim, -1.0, 1.0);
    let ls: Vec<f64> = (0..dim).map(|_| r.random_range(0.5..2.0)).collect();
    let lambda = 10f64.powf(r.random_range(-3.0..-1.5));
    Instance {
        train: TrainingSet::new(x, y).unwrap(),
        inducing: z,
        params: KernelParams::new(&ls, lambda).unwrap(),
    }
}

/// Central differences of the tuning loss over log-lengthscales, inducing
/// entries and log lambda, in the gradient's flat order.
pub fn finite_differences(inst: &Instance, objective: &TuneObjective, h: f64) -> Vec<f64> {
    let dim = inst.params.dim();
    let loss = |ls: &[f64], z: &[f64], ll: f64| {
        let p = KernelParams::from_log(ls.to_vec(), ll).unwrap();
        let zm = FeatureMatrix::new(z.to_vec(), inst.inducing.n_rows(), dim).unwrap();
        tune_loss(&inst.train, &zm, &p, objective).unwrap()
    };
    let ls0 = inst.params.log_lengthscales().to_vec();
    let z0 = inst.inducing.as_slice().to_vec();
    let ll0 = inst.params.log_lambda();
    let mut out = Vec::new();
    for d in 0..dim {
        let (mut a, mut b) = (ls0.clone(), ls0.clone());
        a[d] += h;
        b[d] -= h;
        out.push((loss(&a, &z0, ll0) - loss(&b, &z0, ll0)) / (2.0 * h));
    }
    for k in 0..z0.len() {
        let (mut a, mut b) = (z0.clone(), z0.clone());
        a[k] += h;
        b[k] -= h;
        out.push((loss(&ls0, &a, ll0) - loss(&ls0, &b, ll0)) / (2.0 * h));
    }
    out.push((loss(&ls0, &z0, ll0 + h) - loss(&ls0, &z0, ll0 - h)) / (2.0 * h));
    out
}

/// Richardson extrapolation of two central differences, `(4 D(h) - D(2h)) / 3`,
/// accurate to `O(h^4)` so `h` can stay large enough to keep rounding small.
pub fn extrapolated_differences(inst: &Instance, objective: &TuneObjective, h: f64) -> Vec<f64> {
    let fine = finite_differences(inst, objective, h);
    let coarse = finite_differences(inst, objective, 2.0 * h);
    fine.iter().zip(&coarse).map(|(a, b)| (4.0 * a - b) / 3.0).collect()
}

/// Largest per-coordinate violation of `|a - f| <= max(rel * |f|, floor)`, as a ratio (<= 1 passes).
pub fn worst_violation(analytic: &[f64], fd: &[f64], rel: f64, floor: f64) -> f64 {
    analytic.iter().zip(fd).map(|(a, f)| (a - f).abs() / (rel * f.abs()).max(floor)).fold(0.0, f64::max)
}

pub fn dist(a: &P3, b: &P3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Index and distance of the nearest point by exhaustive scan (first index on ties).
pub fn brute_nearest(p: &P3, set: &[P3]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, q) in set.iter().enumerate() {
        let d = dist(p, q);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

pub fn brute_chamfer(a: &[P3], b: &[P3]) -> f64 {
    let ab: f64 = a.iter().map(|p| brute_nearest(p, b).1).sum::<f64>() / a.len() as f64;
    let ba: f64 = b.iter().map(|p| brute_nearest(p, a).1).sum::<f64>() / b.len() as f64;
    0.5 * ab + 0.5 * ba
}

pub fn brute_fscore(a: &[P3], b: &[P3], tau: f64) -> f64 {
    let recall = a.iter().filter(|p| brute_nearest(p, b).1 < tau).count() as f64 / a.len() as f64;
    let precision = b.iter().filter(|p| brute_nearest(p, a).1 < tau).count() as f64 / b.len() as f64;
    if recall + precision == 0.0 {
        0.0
    } else {
        2.0 * recall * precision / (recall + precision)
    }
}

pub fn brute_nc(a: &[P3], na: &[P3], b: &[P3], nb: &[P3]) -> f64 {
    let dot = |u: &P3, v: &P3| u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    let ab: f64 = a.iter().zip(na).map(|(p, n)| dot(n, &nb[brute_nearest(p, b).0])).sum::<f64>() / a.len() as f64;
    let ba: f64 = b.iter().zip(nb).map(|(p, n)| dot(n, &na[brute_nearest(p, a).0])).sum::<f64>() / b.len() as f64;
    0.5 * ab + 0.5 * ba
}

/// Surface samples with isotropic Gaussian noise of standard deviation `sigma`.
pub fn noisy(points: Vec<P3>, sigma: f64, seed: u64) -> Vec<P3> {
    use rand_distr::{Distribution, Normal};
    let mut r = rng(seed);
    let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).unwrap();
    points
        .into_iter()
        .map(|p| if sigma > 0.0 { p.map(|c| c + normal.sample(&mut r)) } else { p })
        .collect()
}
