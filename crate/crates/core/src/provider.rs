//! Sources of per-point features and occupancy logits.

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cloud::Normalization;
use crate::error::{invalid, Error, Result};
use crate::exchange::{read_queries, read_response, FeatureResponse};
use crate::features::FeatureMatrix;
use crate::shapes::Shape;
use crate::spatial::Point3;

pub const DEFAULT_N_FEATURES: usize = 32;
pub const DEFAULT_FOURIER_SIGMA: f64 = 1.0;
pub const DEFAULT_ORACLE_GAIN: f64 = 50.0;

/// Maps query positions to feature rows and to pseudo-label logits.
pub trait FeatureProvider {
    fn n_features(&self) -> usize;
    fn features(&self, points: &[Point3]) -> Result<FeatureMatrix>;
    fn logits(&self, points: &[Point3]) -> Result<Vec<f64>>;
}

/// Random Fourier positional encoding `[sin(2 pi B q); cos(2 pi B q)]`.
/// Has no notion of occupancy, so its logits are all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierProvider {
    /// `n_features / 2` rows of three frequencies.
    frequencies: Vec<Point3>,
}

impl FourierProvider {
    pub fn new(n_features: usize, sigma: f64, seed: u64) -> Result<Self> {
        if n_features < 2 || n_features % 2 != 0 {
            return Err(invalid(format!("Fourier feature count must be even and positive, got {n_features}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid(format!("frequency scale must be positive, got {sigma}")));
        }
        let normal = Normal::new(0.0, sigma).map_err(|e| invalid(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frequencies = (0..n_features / 2).map(|_| std::array::from_fn(|_| normal.sample(&mut rng))).collect();
        Ok(Self { frequencies })
    }

    pub fn frequencies(&self) -> &[Point3] {
        &self.frequencies
    }
}

impl FeatureProvider for FourierProvider {
    fn n_features(&self) -> usize {
        2 * self.frequencies.len()
    }

    fn features(&self, points: &[Point3]) -> Result<FeatureMatrix> {
        let half = self.frequencies.len();
        let mut data = Vec::with_capacity(points.len() * 2 * half);
        for q in points {
            let start = data.len();
            data.resize(start + 2 * half, 0.0);
            for (k, b) in self.frequencies.iter().enumerate() {
                let phase = 2.0 * std::f64::consts::PI * (b[0] * q[0] + b[1] * q[1] + b[2] * q[2]);
                let (s, c) = phase.sin_cos();
                data[start + k] = s;
                data[start + half + k] = c;
            }
        }
        FeatureMatrix::new(data, points.len(), 2 * half)
    }

    fn logits(&self, points: &[Point3]) -> Result<Vec<f64>> {
        Ok(vec![0.0; points.len()])
    }
}

/// Fourier features plus logits `-gain * sdf(q)` from an analytic shape.
///
/// The shape lives in world coordinates. With a normalization frame the
/// queries are unit-frame positions and the distance is measured in unit-frame
/// lengths, so the gain means the same thing whatever the input scale.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleProvider {
    shape: Shape,
    gain: f64,
    encoder: FourierProvider,
    frame: Normalization,
}

impl OracleProvider {
    pub fn new(shape: Shape, gain: f64, encoder: FourierProvider) -> Result<Self> {
        if !(gain > 0.0 && gain.is_finite()) {
            return Err(invalid(format!("oracle gain must be positive, got {gain}")));
        }
        Ok(Self { shape, gain, encoder, frame: Normalization::IDENTITY })
    }

    pub fn in_frame(mut self, frame: Normalization) -> Self {
        self.frame = frame;
        self
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// Signed distance of a query, in the query frame.
    pub fn sdf(&self, q: &Point3) -> f64 {
        self.shape.sdf(&self.frame.to_world(q)) / self.frame.scale
    }
}

impl FeatureProvider for OracleProvider {
    fn n_features(&self) -> usize {
        self.encoder.n_features()
    }

    fn features(&self, points: &[Point3]) -> Result<FeatureMatrix> {
        self.encoder.features(points)
    }

    fn logits(&self, points: &[Point3]) -> Result<Vec<f64>> {
        Ok(points.iter().map(|q| -self.gain * self.sdf(q)).collect())
    }
}

/// Answers queries from a feature-exchange request/response pair.
///
/// Positions are matched by their `f32` bit patterns, the precision at which
/// they crossed the file boundary.
#[derive(Debug, Clone)]
pub struct FileProvider {
    response: FeatureResponse,
    index: HashMap<[u32; 3], usize>,
}

fn key(p: &[f32; 3]) -> [u32; 3] {
    // +0.0 and -0.0 name the same position
    p.map(|c| if c == 0.0 { 0 } else { c.to_bits() })
}

impl FileProvider {
    pub fn new(queries: &[[f32; 3]], response: FeatureResponse) -> Result<Self> {
        if queries.len() != response.len() {
            return Err(Error::Protocol(format!(
                "response has {} rows for {} queries",
                response.len(),
                queries.len()
            )));
        }
        let mut index = HashMap::with_capacity(queries.len());
        for (i, q) in queries.iter().enumerate() {
            index.entry(key(q)).or_insert(i);
        }
        Ok(Self { response, index })
    }

    pub fn open(queries: &Path, features: &Path) -> Result<Self> {
        let q = read_queries(&mut std::io::BufReader::new(std::fs::File::open(queries)?))?;
        let r = read_response(&mut std::io::BufReader::new(std::fs::File::open(features)?), Some(q.len()))?;
        Self::new(&q, r)
    }

    fn lookup(&self, p: &Point3) -> Result<usize> {
        let q = [p[0] as f32, p[1] as f32, p[2] as f32];
        self.index.get(&key(&q)).copied().ok_or_else(|| {
            Error::Protocol(format!("no response row for query ({}, {}, {})", p[0], p[1], p[2]))
        })
    }
}

impl FeatureProvider for FileProvider {
    fn n_features(&self) -> usize {
        self.response.n_features
    }

    fn features(&self, points: &[Point3]) -> Result<FeatureMatrix> {
        let nf = self.response.n_features;
        let mut data = Vec::with_capacity(points.len() * nf);
        for p in points {
            let row = self.lookup(p)?;
            data.extend(self.response.row(row).iter().map(|&v| v as f64));
        }
        FeatureMatrix::new(data, points.len(), nf)
    }

    fn logits(&self, points: &[Point3]) -> Result<Vec<f64>> {
        points.iter().map(|p| Ok(self.response.logits[self.lookup(p)?] as f64)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourier_features_are_unit_pairs() {
        let f = FourierProvider::new(8, 4.0, 1).unwrap();
        let x = f.features(&[[0.1, 0.2, 0.3], [0.0, 0.0, 0.0]]).unwrap();
        assert_eq!((x.n_rows(), x.n_cols()), (2, 8));
        for i in 0..2 {
            let r = x.row(i);
            for k in 0..4 {
                assert!((r[k] * r[k] + r[k + 4] * r[k + 4] - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(&x.row(1)[..4], &[0.0; 4]);
        assert_eq!(&x.row(1)[4..], &[1.0; 4]);
        assert_eq!(f.logits(&[[1.0; 3]]).unwrap(), vec![0.0]);
        assert_eq!(f, FourierProvider::new(8, 4.0, 1).unwrap());
        assert!(FourierProvider::new(7, 4.0, 1).is_err());
    }

    #[test]
    fn oracle_logit_signs() {
        let enc = FourierProvider::new(4, 4.0, 0).unwrap();
        let o = OracleProvider::new(Shape::Sphere { center: [0.0; 3], radius: 1.0 }, 50.0, enc).unwrap();
        let l = o.logits(&[[1.1, 0.0, 0.0], [0.0, 0.9, 0.0]]).unwrap();
        assert!(l[0] < 0.0 && l[1] > 0.0);
        assert!((l[0] + 5.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_frame_measures_unit_lengths() {
        let enc = FourierProvider::new(4, 4.0, 0).unwrap();
        let frame = Normalization { center: [10.0, 0.0, 0.0], scale: 4.0 };
        let o = OracleProvider::new(Shape::Sphere { center: [10.0, 0.0, 0.0], radius: 2.0 }, 50.0, enc)
            .unwrap()
            .in_frame(frame);
        // world radius 2 is unit-frame radius 0.5
        assert!(o.sdf(&[0.5, 0.0, 0.0]).abs() < 1e-12);
        assert!((o.sdf(&[0.0, 0.0, 0.0]) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn file_provider_lookup() {
        let queries = vec![[0.5f32, -0.0, 1.0], [0.25, 0.75, 0.0]];
        let resp = FeatureResponse { n_features: 2, features: vec![1.0, 2.0, 3.0, 4.0], logits: vec![7.0, -7.0] };
        let p = FileProvider::new(&queries, resp).unwrap();
        let x = p.features(&[[0.25, 0.75, 0.0], [0.5, 0.0, 1.0]]).unwrap();
        assert_eq!(x.as_slice(), &[3.0, 4.0, 1.0, 2.0]);
        assert_eq!(p.logits(&[[0.25, 0.75, 0.0]]).unwrap(), vec![-7.0]);
        assert!(matches!(p.features(&[[9.0, 9.0, 9.0]]), Err(Error::Protocol(_))));
    }
}
