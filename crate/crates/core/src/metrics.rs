//! Surface comparison: L1 Chamfer distance, F-score, normal consistency and
//! volumetric IoU, all on area-uniform surface samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mesh::TriMesh;
use crate::spatial::{dot, KdTree, Point3, TriangleBvh};

pub const DEFAULT_SAMPLES: usize = 100_000;
pub const DEFAULT_TAU: f64 = 0.01;
/// Margin added around the reference mesh's bounding box for IoU sampling.
pub const IOU_PADDING: f64 = 0.05;
const IOU_RAYS: usize = 3;

/// Points drawn uniformly by area, with the unit normal and index of their triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSurface {
    pub points: Vec<Point3>,
    pub normals: Option<Vec<Point3>>,
    pub faces: Vec<usize>,
}

impl SampledSurface {
    pub fn from_points(points: Vec<Point3>, normals: Option<Vec<Point3>>) -> Result<Self> {
        if let Some(n) = &normals {
            crate::error::check_dim(points.len(), n.len())?;
        }
        Ok(Self { points, normals, faces: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn sample_surface(mesh: &TriMesh, count: usize, seed: u64) -> Result<SampledSurface> {
    let mut cumulative = Vec::with_capacity(mesh.triangles().len());
    let mut total = 0.0;
    for f in 0..mesh.triangles().len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::DegenerateVolume("mesh has zero surface area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    let mut faces = Vec::with_capacity(count);
    for _ in 0..count {
        let u = rng.random::<f64>() * total;
        // zero-area faces share their predecessor's cumulative value and are never picked
        let f = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
        let (r1, r2): (f64, f64) = (rng.random(), rng.random());
        let s = r1.sqrt();
        let (wa, wb, wc) = (1.0 - s, s * (1.0 - r2), s * r2);
        let [a, b, c] = mesh.corners(f);
        points.push(std::array::from_fn(|k| wa * a[k] + wb * b[k] + wc * c[k]));
        normals.push(mesh.face_normal(f).unwrap_or([0.0; 3]));
        faces.push(f);
    }
    Ok(SampledSurface { points, normals: Some(normals), faces })
}

/// For every point of `from`, the index of and distance to its nearest point in `to`.
pub fn nearest_distances(from: &[Point3], to: &KdTree) -> Vec<(usize, f64)> {
    from.iter()
        .map(|p| {
            let (i, d2) = to.nearest(p).expect("target set is non-empty");
            (i, d2.sqrt())
        })
        .collect()
}

/// Nearest-neighbour matches in both directions, computed once and shared by the metrics.
pub struct Correspondence<'a> {
    pub a: &'a SampledSurface,
    pub b: &'a SampledSurface,
    pub a_to_b: Vec<(usize, f64)>,
    pub b_to_a: Vec<(usize, f64)>,
}

impl<'a> Correspondence<'a> {
    pub fn new(a: &'a SampledSurface, b: &'a SampledSurface) -> Result<Self> {
        if a.is_empty() || b.is_empty() {
            return Err(invalid("cannot compare an empty surface"));
        }
        let a_to_b = nearest_distances(&a.points, &KdTree::new(&b.points));
        let b_to_a = nearest_distances(&b.points, &KdTree::new(&a.points));
        Ok(Self { a, b, a_to_b, b_to_a })
    }

    /// Half the mean nearest distance from `a` to `b` plus half the reverse.
    pub fn chamfer_l1(&self) -> f64 {
        0.5 * mean(self.a_to_b.iter().map(|m| m.1)) + 0.5 * mean(self.b_to_a.iter().map(|m| m.1))
    }

    /// Harmonic mean of recall (share of `a` strictly closer than `tau` to `b`)
    /// and precision (the same from `b` to `a`); `a` is the reference.
    pub fn fscore(&self, tau: f64) -> Result<f64> {
        if !(tau > 0.0) {
            return Err(invalid(format!("tau must be positive, got {tau}")));
        }
        let within = |m: &[(usize, f64)]| m.iter().filter(|x| x.1 < tau).count() as f64 / m.len() as f64;
        let recall = within(&self.a_to_b);
        let precision = within(&self.b_to_a);
        Ok(if recall + precision > 0.0 { 2.0 * recall * precision / (recall + precision) } else { 0.0 })
    }

    /// Mean dot product of each sample's normal with its match's normal, averaged both ways.
    pub fn normal_consistency(&self) -> Result<f64> {
        let (Some(na), Some(nb)) = (&self.a.normals, &self.b.normals) else {
            return Err(invalid("normal consistency needs normals on both surfaces"));
        };
        let ab = mean(self.a_to_b.iter().enumerate().map(|(i, m)| dot(&na[i], &nb[m.0])));
        let ba = mean(self.b_to_a.iter().enumerate().map(|(j, m)| dot(&nb[j], &na[m.0])));
        Ok(0.5 * ab + 0.5 * ba)
    }
}

fn mean(it: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = it.len() as f64;
    it.sum::<f64>() / n
}

pub fn chamfer_l1(a: &SampledSurface, b: &SampledSurface) -> Result<f64> {
    Ok(Correspondence::new(a, b)?.chamfer_l1())
}

pub fn fscore(a: &SampledSurface, b: &SampledSurface, tau: f64) -> Result<f64> {
    Correspondence::new(a, b)?.fscore(tau)
}

pub fn normal_consistency(a: &SampledSurface, b: &SampledSurface) -> Result<f64> {
    Correspondence::new(a, b)?.normal_consistency()
}

/// Ray-parity inside test with a majority vote over a few random directions.
pub struct InsideTest {
    bvh: TriangleBvh,
}

impl InsideTest {
    pub fn new(mesh: &TriMesh) -> Self {
        Self { bvh: TriangleBvh::new(mesh.vertices(), mesh.triangles()) }
    }

    pub fn contains(&self, p: &Point3, directions: &[Point3]) -> bool {
        let odd = directions.iter().filter(|d| self.bvh.count_hits(p, d) % 2 == 1).count();
        2 * odd > directions.len()
    }
}

fn random_direction<R: Rng>(rng: &mut R) -> Point3 {
    loop {
        let d: Point3 = std::array::from_fn(|_| rng.sample(StandardNormal));
        let l = crate::spatial::norm(&d);
        if l > 1e-12 {
            return d.map(|c| c / l);
        }
    }
}

/// Monte-Carlo IoU of the solids bounded by two meshes, sampled in the
/// reference's bounding box grown by [`IOU_PADDING`] of its extent per side.
pub fn iou_volumetric(gt: &TriMesh, pred: &TriMesh, samples: usize, seed: u64) -> Result<f64> {
    let (lo, hi) = gt.bounds().ok_or_else(|| invalid("reference mesh is empty"))?;
    if samples == 0 {
        return Err(invalid("IoU needs at least one sample"));
    }
    let pad: Point3 = std::array::from_fn(|a| IOU_PADDING * (hi[a] - lo[a]));
    let inside_gt = InsideTest::new(gt);
    let inside_pred = InsideTest::new(pred);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut both, mut either) = (0usize, 0usize);
    for _ in 0..samples {
        let p: Point3 = std::array::from_fn(|a| rng.random_range(lo[a] - pad[a]..=hi[a] + pad[a]));
        let dirs: [Point3; IOU_RAYS] = std::array::from_fn(|_| random_direction(&mut rng));
        let (g, q) = (inside_gt.contains(&p, &dirs), inside_pred.contains(&p, &dirs));
        both += (g && q) as usize;
        either += (g || q) as usize;
    }
    if either == 0 {
        return Err(Error::DegenerateVolume("neither mesh encloses any sample".into()));
    }
    Ok(both as f64 / either as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub samples: usize,
    pub tau: f64,
    pub seed: u64,
    pub iou: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { samples: DEFAULT_SAMPLES, tau: DEFAULT_TAU, seed: 0, iou: true }
    }
}

/// Chamfer distance is reported multiplied by 100.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub iou: Option<f64>,
    pub cd1_x100: f64,
    pub fscore: f64,
    pub nc: f64,
    pub tau: f64,
    pub samples: usize,
    pub seed: u64,
}

pub fn evaluate(gt: &TriMesh, pred: &TriMesh, opts: &EvalOptions) -> Result<MetricsReport> {
    if opts.samples == 0 {
        return Err(invalid("at least one surface sample is required"));
    }
    // one seed for both so a mesh compared with itself scores exactly
    let sg = sample_surface(gt, opts.samples, opts.seed)?;
    let sp = sample_surface(pred, opts.samples, opts.seed)?;
    let c = Correspondence::new(&sg, &sp)?;
    let iou = if opts.iou { Some(iou_volumetric(gt, pred, opts.samples, opts.seed.wrapping_add(1))?) } else { None };
    Ok(MetricsReport {
        iou,
        cd1_x100: 100.0 * c.chamfer_l1(),
        fscore: c.fscore(opts.tau)?,
        nc: c.normal_consistency()?,
        tau: opts.tau,
        samples: opts.samples,
        seed: opts.seed,
    })
}
