//! Randomized trace estimation with Rademacher probes.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n x probes` matrix of independent ±1 entries, fully determined by `seed`.
pub fn rademacher_probes(n: usize, probes: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, probes, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
}

/// Hutchinson estimate `(1/s) sum_i v_i^T op(v_i)` of the trace of a square operator on `R^n`.
pub fn hutchinson_trace<F>(n: usize, probes: usize, seed: u64, mut op: F) -> f64
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    assert!(probes >= 1, "at least one probe is required");
    let v = rademacher_probes(n, probes, seed);
    let total: f64 = v
        .column_iter()
        .map(|col| {
            let col = col.into_owned();
            col.dot(&op(&col))
        })
        .sum();
    total / probes as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_exact() {
        for seed in 0..5 {
            assert_eq!(hutchinson_trace(17, 3, seed, |v| v.clone()), 17.0);
        }
    }

    #[test]
    fn diagonal_converges() {
        let d = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let est = hutchinson_trace(3, 10_000, 7, |v| v.component_mul(&d));
        assert!((est - 6.0).abs() <= 0.05 * 6.0, "estimate {est}");
    }

    #[test]
    fn seeded_determinism() {
        let a = DMatrix::from_fn(20, 20, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let sym = &a + a.transpose();
        let x = hutchinson_trace(20, 9, 42, |v| &sym * v);
        let y = hutchinson_trace(20, 9, 42, |v| &sym * v);
        assert_eq!(x.to_bits(), y.to_bits());
        assert_ne!(rademacher_probes(20, 9, 42), rademacher_probes(20, 9, 43));
    }
}
