//! Solver checkpoints: `checkpoint.toml` describing the parameter layout
//! plus one raw little-endian `f64` file per parameter group.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamBlock, ParamGroup};
use crate::renderer::Scene;
use crate::solver::{initialize, Dataset, SolverConfig};
use crate::workbench::config::ConfigError;

pub const CHECKPOINT_FILE: &str = "checkpoint.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub step: usize,
    pub blocks: Vec<ParamBlock>,
    pub solver: SolverConfig,
}

fn group_file(g: ParamGroup) -> String {
    format!("{}.bin", g.name())
}

pub fn save_checkpoint(dir: &Path, scene: &Scene, config: &SolverConfig, step: usize) -> Result<(), ConfigError> {
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| ConfigError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let values = scene.params.values();
    for g in ParamGroup::ALL {
        let mut bytes = Vec::new();
        for b in scene.params.blocks().iter().filter(|b| b.group == g) {
            for v in &values[b.range()] {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let path = dir.join(group_file(g));
        fs::write(&path, bytes).map_err(io(&path))?;
    }
    let manifest = CheckpointManifest {
        step,
        blocks: scene.params.blocks().to_vec(),
        solver: config.clone(),
    };
    let path = dir.join(CHECKPOINT_FILE);
    fs::write(&path, toml::to_string(&manifest).expect("checkpoint serializes")).map_err(io(&path))?;
    Ok(())
}

/// Rebuilds the solver scene for `dataset` and restores its parameters.
pub fn load_checkpoint(dir: &Path, dataset: &Dataset) -> Result<(Scene, CheckpointManifest), ConfigError> {
    let read = |path: &Path| {
        fs::read(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })
    };
    let text = String::from_utf8(read(&dir.join(CHECKPOINT_FILE))?)
        .map_err(|_| ConfigError::Invalid("checkpoint manifest is not UTF-8".into()))?;
    let manifest: CheckpointManifest = toml::from_str(&text)?;
    let mut scene = initialize(dataset, &manifest.solver).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    if scene.params.blocks() != manifest.blocks.as_slice() {
        return Err(ConfigError::Invalid("checkpoint layout does not match the dataset".into()));
    }
    let blocks = manifest.blocks.clone();
    for g in ParamGroup::ALL {
        let bytes = read(&dir.join(group_file(g)))?;
        let mut words = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let values = scene.params.values_mut();
        let expected: usize = blocks.iter().filter(|b| b.group == g).map(|b| b.len as usize).sum();
        if bytes.len() != expected * 8 {
            return Err(ConfigError::Invalid(format!(
                "{} holds {} bytes, expected {}",
                group_file(g),
                bytes.len(),
                expected * 8
            )));
        }
        for b in blocks.iter().filter(|b| b.group == g) {
            for v in &mut values[b.range()] {
                *v = words.next().expect("length checked");
            }
        }
    }
    Ok((scene, manifest))
}
