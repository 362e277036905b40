//! Experiment plumbing: file formats, configuration, dataset generation,
//! checkpoints and procedural assets.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod manifest;
pub mod pfm;
pub mod procedural;

pub use config::SceneConfig;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use dataset::generate;
pub use manifest::{read_dataset, write_dataset, DatasetManifest};
pub use pfm::{read_pfm, write_pfm, PfmError};
pub use procedural::{cap_occluders, procedural_environment, CapLayout, ToyScene};
