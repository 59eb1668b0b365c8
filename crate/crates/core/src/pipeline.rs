//! From a point cloud to a mesh: training set, tuning, field evaluation, meshing.

use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{upsample, Normalization, PointCloud, DEFAULT_K_NN};
use crate::error::{check_dim, invalid, Error, Result};
use crate::exchange::{QueryManifest, Section};
use crate::features::FeatureMatrix;
use crate::hypertune::{tune, TuneConfig, TuneTrace};
use crate::kernel::{KernelParams, DEFAULT_LAMBDA};
use crate::marching_cubes::{marching_cubes, Grid};
use crate::mesh::TriMesh;
use crate::nystrom::{self, predict, NystromModel, TrainingSet};
use crate::provider::FeatureProvider;
use crate::spatial::Point3;

pub const DEFAULT_M: usize = 500;
pub const DEFAULT_GRID_RESOLUTION: usize = 128;
pub const DEFAULT_GRID_PADDING: f64 = 0.1;
pub const ISO_LEVEL: f64 = 0.5;

/// Lattice points evaluated per provider call.
const FIELD_CHUNK: usize = 16_384;

// Independent streams derived from the run seed.
const UPSAMPLE_STREAM: u64 = 0x5eed_0001;
const INDUCING_STREAM: u64 = 0x5eed_0002;
const MEDIAN_STREAM: u64 = 0x5eed_0003;

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Input points labelled with logit 0, then their perturbed copies labelled by
/// the provider. Returns the training set and the perturbed points.
pub fn build_training_set(
    cloud: &PointCloud,
    provider: &dyn FeatureProvider,
    k_nn: usize,
    seed: u64,
) -> Result<(TrainingSet, PointCloud)> {
    let augmented = upsample(cloud, k_nn, seed)?;
    let x_in = provider.features(cloud.points())?;
    let x_aug = provider.features(augmented.points())?;
    check_dim(provider.n_features(), x_in.n_cols())?;
    let mut labels = vec![0.0; cloud.len()];
    let pseudo = provider.logits(augmented.points())?;
    check_dim(augmented.len(), pseudo.len())?;
    labels.extend(pseudo);
    Ok((TrainingSet::new(x_in.vstack(&x_aug)?, labels)?, augmented))
}

/// `m` distinct training rows chosen uniformly at random.
pub fn init_inducing(train: &TrainingSet, m: usize, seed: u64) -> Result<FeatureMatrix> {
    if m == 0 || m > train.len() {
        return Err(invalid(format!("m = {m} must lie in 1..={}", train.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = sample(&mut rng, train.len(), m).into_vec();
    Ok(train.features().select_rows(&idx))
}

/// Occupancy `sigmoid(g(F(q)))` of a fitted model on a provider's features.
pub struct OccupancyField<'a> {
    model: NystromModel,
    provider: &'a dyn FeatureProvider,
}

impl<'a> OccupancyField<'a> {
    pub fn new(model: NystromModel, provider: &'a dyn FeatureProvider) -> Result<Self> {
        check_dim(provider.n_features(), model.dim())?;
        Ok(Self { model, provider })
    }

    pub fn model(&self) -> &NystromModel {
        &self.model
    }

    pub fn logits(&self, points: &[Point3]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(points.len());
        for chunk in points.chunks(FIELD_CHUNK) {
            out.extend(predict(&self.model, &self.provider.features(chunk)?)?);
        }
        Ok(out)
    }

    pub fn occupancy(&self, points: &[Point3]) -> Result<Vec<f64>> {
        Ok(self.logits(points)?.into_iter().map(sigmoid).collect())
    }

    pub fn occupancy_at(&self, q: &Point3) -> Result<f64> {
        Ok(self.occupancy(std::slice::from_ref(q))?[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructConfig {
    pub m: usize,
    pub k_nn: usize,
    pub grid_resolution: usize,
    /// Grid margin on each side, as a fraction of the cloud's extent.
    pub grid_padding: f64,
    pub seed: u64,
    pub tune: TuneConfig,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        Self {
            m: DEFAULT_M,
            k_nn: DEFAULT_K_NN,
            grid_resolution: DEFAULT_GRID_RESOLUTION,
            grid_padding: DEFAULT_GRID_PADDING,
            seed: 0,
            tune: TuneConfig::default(),
        }
    }
}

impl ReconstructConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(invalid("m must be at least 1"));
        }
        if self.k_nn == 0 {
            return Err(invalid("k_nn must be at least 1"));
        }
        if self.grid_resolution < 2 {
            return Err(invalid("grid resolution must be at least 2"));
        }
        if !(self.grid_padding >= 0.0 && self.grid_padding.is_finite()) {
            return Err(invalid("grid padding must be non-negative"));
        }
        self.tune.validate()
    }

    pub fn grid_for(&self, cloud: &PointCloud) -> Result<Grid> {
        let (lo, hi) = cloud.aabb();
        Grid::around(lo, hi, self.grid_padding, self.grid_resolution)
    }
}

/// Wall-clock time of each pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub training_set: Duration,
    pub tuning: Duration,
    pub field: Duration,
    pub meshing: Duration,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub mesh: TriMesh,
    pub model: NystromModel,
    pub trace: TuneTrace,
    pub initial_params: KernelParams,
    /// Set when tuning produced no usable iterate and the untuned model was kept.
    pub diverged: bool,
    pub grid: Grid,
    pub timings: StageTimings,
}

/// Training set, initial inducing rows and initial kernel parameters.
pub struct Prepared {
    pub train: TrainingSet,
    pub augmented: PointCloud,
    pub inducing: FeatureMatrix,
    pub params: KernelParams,
}

pub fn prepare(cloud: &PointCloud, provider: &dyn FeatureProvider, cfg: &ReconstructConfig) -> Result<Prepared> {
    let (train, augmented) = build_training_set(cloud, provider, cfg.k_nn, cfg.seed ^ UPSAMPLE_STREAM)?;
    if cfg.m > train.len() {
        return Err(invalid(format!("m = {} exceeds the {} training rows", cfg.m, train.len())));
    }
    let inducing = init_inducing(&train, cfg.m, cfg.seed ^ INDUCING_STREAM)?;
    let params = KernelParams::median_heuristic(train.features(), DEFAULT_LAMBDA, cfg.seed ^ MEDIAN_STREAM)?;
    Ok(Prepared { train, augmented, inducing, params })
}

/// Tunes from the prepared state. A diverged run falls back to the untuned model.
pub fn fit(prepared: &Prepared, cfg: &TuneConfig) -> Result<(NystromModel, TuneTrace, bool)> {
    match tune(&prepared.train, &prepared.inducing, &prepared.params, cfg) {
        Ok((model, trace)) => Ok((model, trace, false)),
        Err(Error::TuningDiverged(trace)) => {
            log::warn!("tuning diverged; keeping the untuned model");
            let model = nystrom::solve(&prepared.train, &prepared.inducing, &prepared.params)?;
            Ok((model, *trace, true))
        }
        Err(e) => Err(e),
    }
}

/// Every position the pipeline will ask a provider about, in the order input
/// points, perturbed copies, grid lattice, with a manifest naming the three runs.
pub fn export_queries(
    cloud: &PointCloud,
    cfg: &ReconstructConfig,
    normalization: Normalization,
) -> Result<(Vec<Point3>, QueryManifest)> {
    cfg.validate()?;
    let grid = cfg.grid_for(cloud)?;
    let augmented = upsample(cloud, cfg.k_nn, cfg.seed ^ UPSAMPLE_STREAM)?;
    let mut points = cloud.points().to_vec();
    points.extend_from_slice(augmented.points());
    points.extend(grid.lattice());
    let sections = vec![
        Section { name: "input".into(), offset: 0, count: cloud.len() },
        Section { name: "augmented".into(), offset: cloud.len(), count: augmented.len() },
        Section { name: "grid".into(), offset: 2 * cloud.len(), count: grid.n_points() },
    ];
    let manifest = QueryManifest { total: points.len(), sections, grid, normalization, seed: cfg.seed, k_nn: cfg.k_nn };
    Ok((points, manifest))
}

/// Marching cubes on the occupancy field at the 0.5 level.
pub fn extract_mesh(field: &OccupancyField, grid: &Grid) -> Result<TriMesh> {
    let values = field.occupancy(&grid.lattice())?;
    marching_cubes(&values, grid, ISO_LEVEL)
}

pub fn reconstruct(
    cloud: &PointCloud,
    provider: &dyn FeatureProvider,
    cfg: &ReconstructConfig,
) -> Result<Reconstruction> {
    cfg.validate()?;
    let grid = cfg.grid_for(cloud)?;
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let prepared = prepare(cloud, provider, cfg)?;
    timings.training_set = t.elapsed();

    let t = Instant::now();
    let (model, trace, diverged) = fit(&prepared, &cfg.tune)?;
    timings.tuning = t.elapsed();

    let t = Instant::now();
    let field = OccupancyField::new(model, provider)?;
    let values = field.occupancy(&grid.lattice())?;
    timings.field = t.elapsed();

    let t = Instant::now();
    let mesh = marching_cubes(&values, &grid, ISO_LEVEL)?;
    timings.meshing = t.elapsed();

    Ok(Reconstruction {
        mesh,
        model: field.model,
        trace,
        initial_params: prepared.params,
        diverged,
        grid,
        timings,
    })
}
