//! Point clouds, unit-cube normalization and density-scaled upsampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::mesh::TriMesh;
use crate::spatial::{KdTree, Point3};

/// Neighbour rank whose distance sets the perturbation scale.
pub const DEFAULT_K_NN: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    normals: Option<Vec<Point3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("point cloud is empty"));
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(invalid(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self { points, normals: None })
    }

    pub fn with_normals(points: Vec<Point3>, normals: Vec<Point3>) -> Result<Self> {
        crate::error::check_dim(points.len(), normals.len())?;
        let mut cloud = Self::new(points)?;
        cloud.normals = Some(normals);
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Point3]> {
        self.normals.as_deref()
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn aabb(&self) -> (Point3, Point3) {
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }
}

/// Similarity transform `unit = (world - center) / scale` mapping a cloud's
/// bounding box into the unit cube centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Normalization {
    pub center: Point3,
    pub scale: f64,
}

impl Normalization {
    pub const IDENTITY: Self = Self { center: [0.0; 3], scale: 1.0 };

    pub fn fit(cloud: &PointCloud) -> Self {
        let (lo, hi) = cloud.aabb();
        let center = std::array::from_fn(|a| 0.5 * (lo[a] + hi[a]));
        let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
        Self { center, scale: if extent > 0.0 { extent } else { 1.0 } }
    }

    pub fn to_unit(&self, p: &Point3) -> Point3 {
        std::array::from_fn(|a| (p[a] - self.center[a]) / self.scale)
    }

    pub fn to_world(&self, p: &Point3) -> Point3 {
        std::array::from_fn(|a| p[a] * self.scale + self.center[a])
    }

    pub fn apply(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud {
            points: cloud.points.iter().map(|p| self.to_unit(p)).collect(),
            normals: cloud.normals.clone(),
        }
    }

    pub fn invert_mesh(&self, mesh: &TriMesh) -> TriMesh {
        mesh.map_vertices(|p| self.to_world(p))
    }
}

/// Perturbs every point by `N(0, s_i^2 I)`, where `s_i` is the distance to its
/// `k_nn`-th nearest neighbour (clamped to `N_p - 1`).
pub fn upsample(cloud: &PointCloud, k_nn: usize, seed: u64) -> Result<PointCloud> {
    let n = cloud.len();
    if n < 2 {
        return Err(invalid("upsampling needs at least two points"));
    }
    if k_nn == 0 {
        return Err(invalid("k_nn must be at least 1"));
    }
    let k = k_nn.min(n - 1);
    let tree = KdTree::new(cloud.points());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = cloud
        .points()
        .iter()
        .map(|p| {
            // the query point itself is among the k + 1 nearest
            let sigma = tree.k_nearest(p, k + 1).last().map_or(0.0, |(_, d)| d.sqrt());
            std::array::from_fn(|a| {
                let e: f64 = StandardNormal.sample(&mut rng);
                p[a] + sigma * e
            })
        })
        .collect();
    PointCloud::new(points)
}

/// Per-point perturbation scales used by [`upsample`].
pub fn neighbour_scales(cloud: &PointCloud, k_nn: usize) -> Vec<f64> {
    let k = k_nn.clamp(1, cloud.len().saturating_sub(1).max(1));
    let tree = KdTree::new(cloud.points());
    cloud.points().iter().map(|p| tree.k_nearest(p, k + 1).last().map_or(0.0, |(_, d)| d.sqrt())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_scale_is_their_distance() {
        let cloud = PointCloud::new(vec![[0.0, 0.0, 0.0], [0.0, 3.0, 4.0]]).unwrap();
        assert_eq!(neighbour_scales(&cloud, 1), vec![5.0, 5.0]);
        assert_eq!(neighbour_scales(&cloud, 50), vec![5.0, 5.0]);
    }

    #[test]
    fn upsample_size_and_determinism() {
        let pts: Vec<Point3> = (0..40).map(|i| [i as f64 * 0.1, (i % 7) as f64, 0.5]).collect();
        let cloud = PointCloud::new(pts).unwrap();
        let a = upsample(&cloud, 5, 11).unwrap();
        let b = upsample(&cloud, 5, 11).unwrap();
        let c = upsample(&cloud, 5, 12).unwrap();
        assert_eq!(a.len(), 40);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn upsample_rejects_single_point() {
        let cloud = PointCloud::new(vec![[1.0, 2.0, 3.0]]).unwrap();
        assert!(upsample(&cloud, 1, 0).is_err());
    }

    #[test]
    fn normalization_maps_into_unit_cube() {
        let cloud = PointCloud::new(vec![[1.0, 2.0, 3.0], [5.0, 4.0, 3.5], [2.0, 2.5, 4.0]]).unwrap();
        let norm = Normalization::fit(&cloud);
        let unit = norm.apply(&cloud);
        for p in unit.points() {
            assert!(p.iter().all(|c| c.abs() <= 0.5 + 1e-12));
        }
        let back = norm.to_world(&unit.points()[1]);
        for a in 0..3 {
            assert!((back[a] - cloud.points()[1][a]).abs() < 1e-12);
        }
    }
}
