//! Small regression problems for exercising the solver and the tuner.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::features::FeatureMatrix;
use crate::nystrom::TrainingSet;

pub const RING_RADIUS: f64 = 0.5;
pub const RING_HALF_WIDTH: f64 = 0.1;
pub const RING_GAIN: f64 = 10.0;

/// Signed logit of the annulus `| |x| - RING_RADIUS | < RING_HALF_WIDTH`:
/// positive inside the band, negative outside.
pub fn ring_logit(x: f64, y: f64) -> f64 {
    let r = (x * x + y * y).sqrt();
    RING_GAIN * (RING_HALF_WIDTH - (r - RING_RADIUS).abs())
}

/// `n` points uniform in `[-1, 1]^2` with their ring logits as labels; the
/// features are the raw coordinates.
pub fn ring(n: usize, seed: u64) -> Result<TrainingSet> {
    if n == 0 {
        return Err(invalid("ring dataset needs at least one point"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let (x, y) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        data.extend([x, y]);
        labels.push(ring_logit(x, y));
    }
    TrainingSet::new(FeatureMatrix::new(data, n, 2)?, labels)
}
