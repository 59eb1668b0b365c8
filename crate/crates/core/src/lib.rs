//! Occupancy-field reconstruction from unoriented point clouds with a Nyström
//! kernel ridge regression fitted in a feature space.
//!
//! The regression maps per-point features to occupancy logits: input points are
//! pinned to the 0.5 level set, perturbed copies carry pseudo-labels from a
//! [`provider::FeatureProvider`]. Kernel lengthscales, inducing features and the
//! ridge weight are tuned by gradient descent on an overfitting-aware bound
//! ([`hypertune`]), and the surface is extracted with marching cubes.

pub mod cloud;
pub mod error;
pub mod exchange;
pub mod features;
pub mod hutchinson;
pub mod hypertune;
pub mod io;
pub mod kernel;
pub mod marching_cubes;
pub mod mesh;
pub mod metrics;
pub mod nystrom;
pub mod pipeline;
pub mod provider;
pub mod shapes;
pub mod spatial;
pub mod synthetic;

pub use error::{Error, Result};
pub use features::FeatureMatrix;
pub use hypertune::{tune, TraceMode, TraceRegularizer, TuneConfig, TuneObjective, TuneTrace};
pub use kernel::KernelParams;
pub use mesh::TriMesh;
pub use cloud::PointCloud;
pub use nystrom::{NystromModel, TrainingSet};
