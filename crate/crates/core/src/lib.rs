//! Quality control for whole-slide-image tiles: segment tissue folds and air
//! bubbles, grade their severity with a stacked ensemble, and decide per
//! tile whether the region can be used for diagnosis.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod segmentation;
pub mod severity;
pub mod stacking;
pub mod synth;
pub mod types;

pub use config::{validate_config, Architecture, LossKind, OptimizerKind, PlateauConfig, RunConfig};
pub use error::{Error, Result};
pub use manifest::{DatasetManifest, ManifestEntry};
pub use types::{ArtifactKind, BinaryMask, MaskSample, RgbImage, SegPair, Severity, SeveritySample, TileSample};
