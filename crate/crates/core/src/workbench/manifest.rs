//! On-disk datasets: a `manifest.toml` next to per-frame PFM images, with
//! ground truth for evaluation. All paths in a manifest are relative.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::geometry::{parse_obj, ObjectGeometry, Sphere, Vec3};
use crate::occluder::{Cap, CapMasks, OccluderModel};
use crate::renderer::{Camera, Image};
use crate::solver::{Dataset, Frame, GroundTruth};
use crate::workbench::config::ConfigError;
use crate::workbench::pfm::{read_pfm_sized, write_pfm, PfmError};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeometryEntry {
    Sphere { center: [f64; 3], radius: f64 },
    Mesh { path: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub image: String,
    pub mask: String,
    pub position: [f64; 3],
    /// Camera axes (right, up, back) as columns.
    pub rotation: [[f64; 3]; 3],
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapRecord {
    pub frame: usize,
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub environment: Option<String>,
    #[serde(default)]
    pub albedo: Vec<String>,
    #[serde(default)]
    pub caps: Vec<CapRecord>,
    #[serde(default)]
    pub cap_radii: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub geometry: GeometryEntry,
    pub frames: Vec<FrameEntry>,
    #[serde(default)]
    pub truth: TruthEntry,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ConfigError + '_ {
    move |source| ConfigError::Io {
        path: path.to_owned(),
        source,
    }
}

fn pfm_err(path: &Path) -> impl FnOnce(PfmError) -> ConfigError + '_ {
    move |source| ConfigError::Pfm {
        path: path.to_owned(),
        source,
    }
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn mask_image(width: usize, height: usize, mask: &[bool]) -> Image {
    Image {
        width,
        height,
        pixels: mask.iter().map(|&m| [if m { 1.0 } else { 0.0 }; 3]).collect(),
    }
}

fn save_pfm(dir: &Path, name: &str, image: &Image) -> Result<String, ConfigError> {
    let path = dir.join(name);
    write_pfm(&path, image).map_err(pfm_err(&path))?;
    Ok(name.to_owned())
}

/// Writes images, geometry, ground truth and the manifest into `dir`.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<DatasetManifest, ConfigError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let geometry = match &dataset.geometry {
        ObjectGeometry::Sphere(s) => GeometryEntry::Sphere {
            center: arr(&s.center),
            radius: s.radius,
        },
        ObjectGeometry::Mesh(m) => {
            let path = dir.join("geometry.obj");
            fs::write(&path, m.to_obj()).map_err(io_err(&path))?;
            GeometryEntry::Mesh {
                path: "geometry.obj".into(),
            }
        }
    };
    let mut frames = Vec::with_capacity(dataset.frames.len());
    for (t, f) in dataset.frames.iter().enumerate() {
        let cam = &f.camera;
        let r = &cam.rotation;
        frames.push(FrameEntry {
            image: save_pfm(dir, &format!("frame_{t:03}.pfm"), &f.image)?,
            mask: save_pfm(dir, &format!("mask_{t:03}.pfm"), &mask_image(cam.width, cam.height, &f.mask))?,
            position: arr(&cam.position),
            rotation: [0, 1, 2].map(|c| [r[(0, c)], r[(1, c)], r[(2, c)]]),
            fov_y: cam.fov_y,
            width: cam.width,
            height: cam.height,
            radius: f.radius,
        });
    }
    let mut truth = TruthEntry::default();
    if let Some((h, w, rad)) = &dataset.truth.env {
        let im = Image {
            width: *w,
            height: *h,
            pixels: rad.clone(),
        };
        truth.environment = Some(save_pfm(dir, "truth_environment.pfm", &im)?);
    }
    for (t, a) in dataset.truth.albedo.iter().enumerate() {
        truth.albedo.push(save_pfm(dir, &format!("truth_albedo_{t:03}.pfm"), a)?);
    }
    if let Some(OccluderModel::Caps(c)) = &dataset.truth.occluders {
        truth.cap_radii = c.radii.clone();
        for (t, caps) in c.caps.iter().enumerate() {
            truth.caps.extend(caps.iter().map(|cap| CapRecord {
                frame: t,
                center: arr(&cap.center),
                radius: cap.radius,
            }));
        }
    }
    let manifest = DatasetManifest { geometry, frames, truth };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, toml::to_string(&manifest).expect("manifest serializes")).map_err(io_err(&path))?;
    Ok(manifest)
}

/// Loads a dataset from a manifest file or the directory holding one.
pub fn read_dataset(path: &Path) -> Result<(Dataset, DatasetManifest), ConfigError> {
    let file: PathBuf = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_owned() };
    let dir = file.parent().unwrap_or(Path::new(".")).to_owned();
    let text = fs::read_to_string(&file).map_err(io_err(&file))?;
    let manifest: DatasetManifest = toml::from_str(&text)?;
    if manifest.frames.is_empty() {
        return Err(ConfigError::Invalid("manifest has no frames".into()));
    }
    let geometry = match &manifest.geometry {
        GeometryEntry::Sphere { center, radius } => ObjectGeometry::Sphere(Sphere {
            center: Vec3::from(*center),
            radius: *radius,
        }),
        GeometryEntry::Mesh { path } => {
            let p = dir.join(path);
            ObjectGeometry::Mesh(parse_obj(&fs::read_to_string(&p).map_err(io_err(&p))?)?)
        }
    };
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for f in &manifest.frames {
        let rot = Matrix3::from_fn(|r, c| f.rotation[c][r]);
        let camera = Camera {
            position: Vec3::from(f.position),
            rotation: rot,
            fov_y: f.fov_y,
            width: f.width,
            height: f.height,
        };
        let load = |name: &str| {
            let p = dir.join(name);
            read_pfm_sized(&p, f.width, f.height).map_err(pfm_err(&p))
        };
        let image = load(&f.image)?;
        let mask = load(&f.mask)?.pixels.iter().map(|p| p[0] > 0.5).collect();
        frames.push(Frame {
            camera,
            radius: f.radius,
            image,
            mask,
        });
    }
    let env = match &manifest.truth.environment {
        Some(name) => {
            let p = dir.join(name);
            let im = crate::workbench::pfm::read_pfm(&p).map_err(pfm_err(&p))?;
            Some((im.height, im.width, im.pixels))
        }
        None => None,
    };
    let mut albedo = Vec::new();
    for (t, name) in manifest.truth.albedo.iter().enumerate() {
        let f = manifest
            .frames
            .get(t)
            .ok_or_else(|| ConfigError::Invalid("more albedo images than frames".into()))?;
        let p = dir.join(name);
        albedo.push(read_pfm_sized(&p, f.width, f.height).map_err(pfm_err(&p))?);
    }
    let occluders = if manifest.truth.cap_radii.is_empty() {
        None
    } else {
        let mut caps = vec![Vec::new(); manifest.truth.cap_radii.len()];
        for c in &manifest.truth.caps {
            caps.get_mut(c.frame)
                .ok_or_else(|| ConfigError::Invalid(format!("cap for missing frame {}", c.frame)))?
                .push(Cap {
                    center: Vec3::from(c.center),
                    radius: c.radius,
                });
        }
        Some(OccluderModel::Caps(CapMasks {
            radii: manifest.truth.cap_radii.clone(),
            caps,
        }))
    };
    let dataset = Dataset {
        geometry,
        frames,
        truth: GroundTruth { env, albedo, occluders },
    };
    Ok((dataset, manifest))
}
