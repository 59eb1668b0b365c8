use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nkrr_core::cloud::Normalization;
use nkrr_core::exchange::write_queries;
use nkrr_core::io::{read_mesh, read_point_cloud, write_obj, write_ply_mesh};
use nkrr_core::metrics::evaluate;
use nkrr_core::pipeline::{export_queries, fit, prepare, reconstruct};
use nkrr_core::provider::{FeatureProvider, FileProvider, FourierProvider, OracleProvider};
use nkrr_core::{KernelParams, NystromModel, PointCloud, TuneTrace};
use serde::Serialize;

use crate::config::{ProviderKind, RunConfig};
use crate::error::CliError;

pub const CONFIG_ECHO: &str = "config.toml";
pub const MODEL_FILE: &str = "model.json";
pub const TRACE_FILE: &str = "tune_trace.csv";
pub const MESH_OBJ: &str = "mesh.obj";
pub const MESH_PLY: &str = "mesh.ply";
pub const QUERIES_FILE: &str = "queries.fx";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.json";

fn stage(name: &str, took: Duration) {
    eprintln!("{name:<14} {:>10.3} s", took.as_secs_f64());
}

fn input_of(cfg: &RunConfig) -> &Path {
    cfg.input.as_deref().expect("validated")
}

fn prepare_output(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
    write_file(&dir.join(CONFIG_ECHO), cfg.to_toml().as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// The cloud in the frame the pipeline runs in, and that frame.
fn load_cloud(cfg: &RunConfig) -> Result<(PointCloud, Normalization), CliError> {
    let path = input_of(cfg);
    let cloud = read_point_cloud(path).map_err(|e| CliError::at(path, e))?;
    let frame = if cfg.normalize { Normalization::fit(&cloud) } else { Normalization::IDENTITY };
    Ok((frame.apply(&cloud), frame))
}

/// `m` against the training rows the cloud will produce.
fn check_m(cfg: &RunConfig, cloud: &PointCloud) -> Result<(), CliError> {
    let rows = 2 * cloud.len();
    if cfg.reconstruct.m > rows {
        return Err(CliError::config(format!("m = {} exceeds the {rows} training rows", cfg.reconstruct.m)));
    }
    Ok(())
}

fn build_provider(cfg: &RunConfig, frame: Normalization) -> Result<Box<dyn FeatureProvider>, CliError> {
    let p = &cfg.provider;
    let encoder = || FourierProvider::new(p.n_features, p.sigma, cfg.reconstruct.seed);
    Ok(match p.kind {
        ProviderKind::Fourier => Box::new(encoder()?),
        ProviderKind::Oracle => {
            let shape = p.shape.clone().expect("validated");
            Box::new(OracleProvider::new(shape, p.gain, encoder()?)?.in_frame(frame))
        }
        ProviderKind::File => {
            let (q, f) = (p.queries.as_deref().expect("validated"), p.features.as_deref().expect("validated"));
            Box::new(FileProvider::open(q, f).map_err(|e| CliError::at(f, e))?)
        }
    })
}

#[derive(Serialize)]
struct ParamSummary {
    lengthscales: Vec<f64>,
    lambda: f64,
    log_lengthscales: Vec<f64>,
    log_lambda: f64,
}

impl From<&KernelParams> for ParamSummary {
    fn from(p: &KernelParams) -> Self {
        Self {
            lengthscales: p.lengthscales(),
            lambda: p.lambda(),
            log_lengthscales: p.log_lengthscales().to_vec(),
            log_lambda: p.log_lambda(),
        }
    }
}

#[derive(Serialize)]
struct ModelSummary<'a> {
    normalization: Normalization,
    n_train: usize,
    initial: ParamSummary,
    #[serde(rename = "final")]
    tuned: ParamSummary,
    best_step: usize,
    diverged: bool,
    model: &'a NystromModel,
}

fn write_fit(
    dir: &Path,
    frame: Normalization,
    n_train: usize,
    initial: &KernelParams,
    model: &NystromModel,
    trace: &TuneTrace,
    diverged: bool,
) -> Result<(), CliError> {
    let summary = ModelSummary {
        normalization: frame,
        n_train,
        initial: initial.into(),
        tuned: model.params().into(),
        best_step: trace.best_step,
        diverged,
        model,
    };
    write_json(&dir.join(MODEL_FILE), &summary)?;
    write_file(&dir.join(TRACE_FILE), trace.to_csv().as_bytes())
}

pub fn cmd_reconstruct(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate_fit()?;
    let (cloud, frame) = load_cloud(cfg)?;
    check_m(cfg, &cloud)?;
    let provider = build_provider(cfg, frame)?;
    prepare_output(cfg)?;

    let rec = reconstruct(&cloud, provider.as_ref(), &cfg.reconstruct)?;
    let t = &rec.timings;
    stage("training set", t.training_set);
    stage("tuning", t.tuning);
    stage("field", t.field);
    stage("meshing", t.meshing);
    if rec.mesh.is_empty() {
        log::warn!("the occupancy field never crosses 0.5 inside the grid; the mesh is empty");
    }

    let dir = &cfg.output_dir;
    let mesh = frame.invert_mesh(&rec.mesh);
    write_obj(&dir.join(MESH_OBJ), &mesh).map_err(|e| CliError::at(&dir.join(MESH_OBJ), e))?;
    write_ply_mesh(&dir.join(MESH_PLY), &mesh).map_err(|e| CliError::at(&dir.join(MESH_PLY), e))?;
    write_fit(dir, frame, 2 * cloud.len(), &rec.initial_params, &rec.model, &rec.trace, rec.diverged)
}

pub fn cmd_tune_only(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate_fit()?;
    let (cloud, frame) = load_cloud(cfg)?;
    check_m(cfg, &cloud)?;
    let provider = build_provider(cfg, frame)?;
    prepare_output(cfg)?;

    let t = Instant::now();
    let prepared = prepare(&cloud, provider.as_ref(), &cfg.reconstruct)?;
    stage("training set", t.elapsed());
    let t = Instant::now();
    let (model, trace, diverged) = fit(&prepared, &cfg.reconstruct.tune)?;
    stage("tuning", t.elapsed());
    write_fit(&cfg.output_dir, frame, prepared.train.len(), &prepared.params, &model, &trace, diverged)
}

pub fn cmd_export_queries(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.input.is_none() {
        return Err(CliError::config("no input point cloud given (--input)"));
    }
    cfg.reconstruct.validate()?;
    let (cloud, frame) = load_cloud(cfg)?;
    prepare_output(cfg)?;

    let t = Instant::now();
    let (points, manifest) = export_queries(&cloud, &cfg.reconstruct, frame)?;
    let path: PathBuf = cfg.output_dir.join(QUERIES_FILE);
    let mut bytes = Vec::with_capacity(16 + 12 * points.len());
    write_queries(&mut bytes, &points)?;
    write_file(&path, &bytes)?;
    write_json(&cfg.output_dir.join(MANIFEST_FILE), &manifest)?;
    stage("export", t.elapsed());
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate_eval()?;
    let (pred_path, gt_path) = (input_of(cfg), cfg.reference.as_deref().expect("validated"));
    let pred = read_mesh(pred_path).map_err(|e| CliError::at(pred_path, e))?;
    let gt = read_mesh(gt_path).map_err(|e| CliError::at(gt_path, e))?;
    for (mesh, path) in [(&pred, pred_path), (&gt, gt_path)] {
        if mesh.is_empty() {
            return Err(CliError::numeric(format!("{}: mesh has no triangles, nothing to compare", path.display())));
        }
    }
    prepare_output(cfg)?;

    let t = Instant::now();
    let report = evaluate(&gt, &pred, &cfg.eval)?;
    stage("metrics", t.elapsed());
    write_json(&cfg.output_dir.join(METRICS_FILE), &report)
}
