//! Run configuration: a TOML document overlaid with command-line flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use nkrr_core::hypertune::{TraceMode, AUTO_PROBES};
use nkrr_core::metrics::EvalOptions;
use nkrr_core::pipeline::ReconstructConfig;
use nkrr_core::provider::{DEFAULT_FOURIER_SIGMA, DEFAULT_N_FEATURES, DEFAULT_ORACLE_GAIN};
use nkrr_core::shapes::Shape;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Fourier,
    Oracle,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub n_features: usize,
    /// Standard deviation of the Fourier frequencies.
    pub sigma: f64,
    /// Oracle logit per unit of signed distance, in normalized lengths.
    pub gain: f64,
    /// Oracle shape, in the input cloud's coordinates.
    pub shape: Option<Shape>,
    pub queries: Option<PathBuf>,
    pub features: Option<PathBuf>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Fourier,
            n_features: DEFAULT_N_FEATURES,
            sigma: DEFAULT_FOURIER_SIGMA,
            gain: DEFAULT_ORACLE_GAIN,
            shape: None,
            queries: None,
            features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Point cloud for `reconstruct`, `tune-only` and `export-queries`; predicted mesh for `eval`.
    pub input: Option<PathBuf>,
    /// Ground-truth mesh for `eval`.
    pub reference: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Map the cloud into a unit box before fitting and map the mesh back afterwards.
    pub normalize: bool,
    pub provider: ProviderConfig,
    pub reconstruct: ReconstructConfig,
    pub eval: EvalOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            reference: None,
            output_dir: PathBuf::from("out"),
            normalize: true,
            provider: ProviderConfig::default(),
            reconstruct: ReconstructConfig::default(),
            eval: EvalOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TraceFlag {
    Exact,
    Stochastic,
}

/// Flags shared by every subcommand. Each one that is given overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Reference mesh (eval only).
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub provider: Option<ProviderKind>,
    /// Request file for the file provider.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Response file for the file provider.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Number of inducing points.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Marching-cubes resolution per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Seeds both the pipeline and the trace probes.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_tune_theta: bool,
    #[arg(long)]
    pub no_tune_z: bool,
    #[arg(long)]
    pub no_tune_lambda: bool,
    #[arg(long, value_enum)]
    pub trace: Option<TraceFlag>,
    /// Probe count for the stochastic trace.
    #[arg(long)]
    pub probes: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Surface samples per mesh (eval only).
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub no_iou: bool,
    /// Fit in the input's own coordinates.
    #[arg(long)]
    pub no_normalize: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn resolve(flags: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match &flags.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        cfg.apply(flags);
        Ok(cfg)
    }

    pub fn apply(&mut self, f: &Overrides) {
        let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
            if v.is_some() {
                slot.clone_from(v);
            }
        };
        set(&mut self.input, &f.input);
        set(&mut self.reference, &f.reference);
        set(&mut self.provider.queries, &f.queries);
        set(&mut self.provider.features, &f.features);
        if let Some(d) = &f.output_dir {
            self.output_dir = d.clone();
        }
        if let Some(k) = f.provider {
            self.provider.kind = k;
        }
        let r = &mut self.reconstruct;
        if let Some(m) = f.m {
            r.m = m;
        }
        if let Some(s) = f.steps {
            r.tune.steps = s;
        }
        if let Some(lr) = f.lr {
            r.tune.learning_rate = lr;
        }
        if let Some(g) = f.grid {
            r.grid_resolution = g;
        }
        if let Some(s) = f.seed {
            r.seed = s;
            r.tune.seed = s;
        }
        r.tune.tune_theta &= !f.no_tune_theta;
        r.tune.tune_z &= !f.no_tune_z;
        r.tune.tune_lambda &= !f.no_tune_lambda;
        match (f.trace, f.probes) {
            (Some(TraceFlag::Exact), _) => r.tune.trace_mode = TraceMode::Exact,
            (Some(TraceFlag::Stochastic), p) => {
                r.tune.trace_mode = TraceMode::Stochastic { probes: p.unwrap_or(AUTO_PROBES) }
            }
            (None, Some(p)) => r.tune.trace_mode = TraceMode::Stochastic { probes: p },
            (None, None) => {}
        }
        if let Some(t) = f.tau {
            self.eval.tau = t;
        }
        if let Some(s) = f.samples {
            self.eval.samples = s;
        }
        self.eval.iou &= !f.no_iou;
        self.normalize &= !f.no_normalize;
    }

    /// Checks everything a fitting command needs before any file is read.
    pub fn validate_fit(&self) -> Result<(), CliError> {
        if self.input.is_none() {
            return Err(CliError::config("no input point cloud given (--input)"));
        }
        self.reconstruct.validate()?;
        let p = &self.provider;
        if p.n_features < 2 || p.n_features % 2 != 0 {
            return Err(CliError::config(format!("provider.n_features must be even and positive, got {}", p.n_features)));
        }
        match p.kind {
            ProviderKind::Fourier => {}
            ProviderKind::Oracle if p.shape.is_none() => {
                return Err(CliError::config("the oracle provider needs provider.shape"));
            }
            ProviderKind::Oracle => {}
            ProviderKind::File if p.queries.is_none() || p.features.is_none() => {
                return Err(CliError::config("the file provider needs --queries and --features"));
            }
            ProviderKind::File => {}
        }
        Ok(())
    }

    pub fn validate_eval(&self) -> Result<(), CliError> {
        if self.input.is_none() || self.reference.is_none() {
            return Err(CliError::config("eval needs --input (predicted mesh) and --reference"));
        }
        if !(self.eval.tau > 0.0) {
            return Err(CliError::config(format!("tau must be positive, got {}", self.eval.tau)));
        }
        if self.eval.samples == 0 {
            return Err(CliError::config("at least one surface sample is required"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration is representable in TOML")
    }
}
