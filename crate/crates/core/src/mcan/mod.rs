//! The multi-fold correlation attention network.
//!
//! [`ModelData`] turns a dataset plus a fitted [`crate::trainer::Normalization`]
//! into per-sample inputs; [`Mcan`] runs the three spatial channel models,
//! the temporal and context branches, and fuses them with attention.

mod checkpoint;
mod config;
mod data;
mod model;

pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use config::{Ablation, ModelConfig};
pub use data::{ModelData, ReadTrace, Sample, SampleInputs, SampleTargets};
pub use model::{loss_value, BundleVars, Mcan, PredictionBundle};
