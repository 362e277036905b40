//! Scene and experiment configuration, stored as TOML. Relative paths are
//! resolved against the directory holding the configuration file.
//!
//! ```toml
//! seed = 7
//! [geometry]
//! kind = "sphere"          # or "blob" (rings, segments, amplitude, seed) or "mesh" (path)
//! [material]
//! kind = "ggx"             # or "lambertian", "checker"
//! albedo = [0.6, 0.4, 0.3]
//! preset = "diffuse"       # roughness 0.6; "shiny" is 0.2; or set roughness
//! [environment]
//! kind = "procedural"      # or "uniform" (radiance), "pfm" (path)
//! [occluders]
//! kind = "caps"            # or "none", "cap_list" (caps = [{frame, center, radius}]), "harmonic" (path)
//! [cameras]
//! kind = "orbit"           # or "poses" (poses = [{position, target, ...}])
//! [render]
//! [solver]
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envlight::EnvironmentPyramid;
use crate::geometry::{parse_obj, GeometryError, ObjectGeometry, Sphere, TriangleMesh, Vec3};
use crate::material::{BrdfKind, BrdfParams, MaterialModel};
use crate::occluder::{sh_count, Cap, CapMasks, OccluderModel};
use crate::renderer::{orbit_cameras, Camera, RenderError, RenderSettings, Scene};
use crate::solver::SolverConfig;
use crate::workbench::pfm::{read_pfm, PfmError};
use crate::workbench::procedural::{cap_occluders, procedural_environment, CapLayout};
use crate::ParameterStore;

pub const DIFFUSE_ROUGHNESS: f64 = 0.6;
pub const SHINY_ROUGHNESS: f64 = 0.2;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config syntax: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Pfm { path: PathBuf, source: PfmError },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Render(#[from] RenderError),
}

fn read_text(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_owned(),
        source,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometryConfig {
    Sphere {
        #[serde(default = "one")]
        radius: f64,
    },
    Blob {
        rings: usize,
        segments: usize,
        amplitude: f64,
        #[serde(default)]
        seed: u64,
    },
    Mesh {
        path: PathBuf,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoughnessPreset {
    Diffuse,
    Shiny,
}

impl RoughnessPreset {
    pub fn roughness(self) -> f64 {
        match self {
            RoughnessPreset::Diffuse => DIFFUSE_ROUGHNESS,
            RoughnessPreset::Shiny => SHINY_ROUGHNESS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaterialConfig {
    Lambertian {
        albedo: [f64; 3],
    },
    Ggx {
        albedo: [f64; 3],
        #[serde(default)]
        roughness: Option<f64>,
        #[serde(default)]
        preset: Option<RoughnessPreset>,
        #[serde(default)]
        specular: f64,
    },
    /// Two Lambertian albedos on a 3-D checkerboard.
    Checker {
        a: [f64; 3],
        b: [f64; 3],
        cells: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentConfig {
    Uniform {
        radiance: f64,
        #[serde(default = "env_height")]
        height: usize,
        #[serde(default = "env_width")]
        width: usize,
    },
    Pfm {
        path: PathBuf,
    },
    Procedural {
        #[serde(default = "env_height")]
        height: usize,
        #[serde(default = "env_width")]
        width: usize,
        #[serde(default = "env_degree")]
        degree: usize,
        #[serde(default = "env_amplitude")]
        amplitude: f64,
        #[serde(default = "one")]
        mean: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn env_height() -> usize {
    10
}
fn env_width() -> usize {
    20
}
fn env_degree() -> usize {
    4
}
fn env_amplitude() -> f64 {
    1.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapEntry {
    pub frame: usize,
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OccluderConfig {
    None,
    /// Random caps around each camera direction.
    Caps {
        per_frame: usize,
        radius_min: f64,
        radius_max: f64,
        spread: f64,
    },
    CapList {
        caps: Vec<CapEntry>,
    },
    /// Whitespace-separated coefficients, frame-major, `(degree+1)²` per frame.
    Harmonic {
        path: PathBuf,
        degree: usize,
        bias: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub position: [f64; 3],
    #[serde(default)]
    pub target: [f64; 3],
    #[serde(default = "up")]
    pub up: [f64; 3],
    #[serde(default = "fov")]
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
}

fn up() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}
fn fov() -> f64 {
    0.6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CameraConfig {
    Orbit {
        count: usize,
        radius: f64,
        #[serde(default)]
        elevation: f64,
        #[serde(default)]
        spiral: bool,
        #[serde(default = "fov")]
        fov_y: f64,
        size: usize,
    },
    Poses {
        poses: Vec<Pose>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub seed: u64,
    pub geometry: GeometryConfig,
    pub material: MaterialConfig,
    pub environment: EnvironmentConfig,
    pub occluders: OccluderConfig,
    pub cameras: CameraConfig,
    pub render: RenderSettings,
    pub solver: SolverConfig,
}

impl Default for SceneConfig {
    /// Furnace: unit Lambertian sphere of albedo 0.5 under unit sky.
    fn default() -> Self {
        SceneConfig {
            seed: 0,
            geometry: GeometryConfig::Sphere { radius: 1.0 },
            material: MaterialConfig::Lambertian { albedo: [0.5; 3] },
            environment: EnvironmentConfig::Uniform {
                radiance: 1.0,
                height: env_height(),
                width: env_width(),
            },
            occluders: OccluderConfig::None,
            cameras: CameraConfig::Orbit {
                count: 4,
                radius: 4.0,
                elevation: 0.5,
                spiral: true,
                fov_y: fov(),
                size: 32,
            },
            render: RenderSettings::default(),
            solver: SolverConfig::default(),
        }
    }
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

impl SceneConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&read_text(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn camera_list(&self) -> Result<Vec<Camera>, ConfigError> {
        let cams = match &self.cameras {
            CameraConfig::Orbit {
                count,
                radius,
                elevation,
                spiral,
                fov_y,
                size,
            } => orbit_cameras(*count, *radius, *elevation, *spiral, *fov_y, *size),
            CameraConfig::Poses { poses } => poses
                .iter()
                .map(|p| Camera::look_at(vec3(p.position), vec3(p.target), vec3(p.up), p.fov_y, p.width, p.height))
                .collect(),
        };
        if cams.is_empty() {
            return Err(ConfigError::Invalid("no cameras".into()));
        }
        Ok(cams)
    }

    fn geometry(&self, base: &Path) -> Result<ObjectGeometry, ConfigError> {
        Ok(match &self.geometry {
            GeometryConfig::Sphere { radius } => ObjectGeometry::Sphere(Sphere {
                center: Vec3::zeros(),
                radius: *radius,
            }),
            GeometryConfig::Blob {
                rings,
                segments,
                amplitude,
                seed,
            } => ObjectGeometry::Mesh(TriangleMesh::blob(*rings, *segments, *amplitude, *seed)),
            GeometryConfig::Mesh { path } => ObjectGeometry::Mesh(parse_obj(&read_text(&base.join(path))?)?),
        })
    }

    fn material(&self) -> Result<MaterialModel, ConfigError> {
        Ok(match &self.material {
            MaterialConfig::Lambertian { albedo } => MaterialModel::Uniform {
                kind: BrdfKind::Lambertian,
                params: BrdfParams::new(*albedo, 1.0, 0.0),
            },
            MaterialConfig::Ggx {
                albedo,
                roughness,
                preset,
                specular,
            } => {
                let rough = match (roughness, preset) {
                    (Some(_), Some(_)) => return Err(ConfigError::Invalid("set roughness or preset, not both".into())),
                    (Some(r), None) => *r,
                    (None, Some(p)) => p.roughness(),
                    (None, None) => DIFFUSE_ROUGHNESS,
                };
                MaterialModel::Uniform {
                    kind: BrdfKind::Ggx,
                    params: BrdfParams::new(*albedo, rough, *specular),
                }
            }
            MaterialConfig::Checker { a, b, cells } => MaterialModel::Checker {
                kind: BrdfKind::Lambertian,
                a: BrdfParams::new(*a, 1.0, 0.0),
                b: BrdfParams::new(*b, 1.0, 0.0),
                cells: *cells,
            },
        })
    }

    /// Environment texel grid `(height, width, radiance)`.
    pub fn environment_grid(&self, base: &Path) -> Result<(usize, usize, Vec<[f64; 3]>), ConfigError> {
        Ok(match &self.environment {
            EnvironmentConfig::Uniform { radiance, height, width } => (*height, *width, vec![[*radiance; 3]; height * width]),
            EnvironmentConfig::Pfm { path } => {
                let path = base.join(path);
                let im = read_pfm(&path).map_err(|source| ConfigError::Pfm { path, source })?;
                (im.height, im.width, im.pixels)
            }
            EnvironmentConfig::Procedural {
                height,
                width,
                degree,
                amplitude,
                mean,
                seed,
            } => (
                *height,
                *width,
                procedural_environment(*height, *width, *degree, *amplitude, *mean, *seed),
            ),
        })
    }

    fn occluders(&self, base: &Path, cameras: &[Camera], params: &mut ParameterStore) -> Result<OccluderModel, ConfigError> {
        let frames = cameras.len();
        let radii = || cameras.iter().map(Camera::distance).collect::<Vec<_>>();
        Ok(match &self.occluders {
            OccluderConfig::None => OccluderModel::None,
            OccluderConfig::Caps {
                per_frame,
                radius_min,
                radius_max,
                spread,
            } => cap_occluders(
                cameras,
                &CapLayout {
                    per_frame: *per_frame,
                    radius_min: *radius_min,
                    radius_max: *radius_max,
                    spread: *spread,
                },
                self.seed,
            ),
            OccluderConfig::CapList { caps } => {
                let mut per = vec![Vec::new(); frames];
                for c in caps {
                    let slot = per
                        .get_mut(c.frame)
                        .ok_or_else(|| ConfigError::Invalid(format!("cap for frame {} of {frames}", c.frame)))?;
                    let center = vec3(c.center);
                    if !(center.norm() > 0.0) {
                        return Err(ConfigError::Invalid("cap centre must be nonzero".into()));
                    }
                    slot.push(Cap {
                        center: center.normalize(),
                        radius: c.radius,
                    });
                }
                OccluderModel::Caps(CapMasks { radii: radii(), caps: per })
            }
            OccluderConfig::Harmonic { path, degree, bias } => {
                let text = read_text(&base.join(path))?;
                let coeffs: Vec<f64> = text
                    .split_whitespace()
                    .map(|t| t.parse().map_err(|_| ConfigError::Invalid(format!("bad coefficient {t:?}"))))
                    .collect::<Result<_, _>>()?;
                let want = frames * sh_count(*degree);
                if coeffs.len() != want {
                    return Err(ConfigError::Invalid(format!(
                        "{} coefficients, expected {want} for {frames} frames",
                        coeffs.len()
                    )));
                }
                let model = OccluderModel::harmonic(params, *degree, *bias, radii());
                let first = model.coefficient_id(0, 0, 0).expect("harmonic") as usize;
                params.values_mut()[first..first + want].copy_from_slice(&coeffs);
                model
            }
        })
    }

    /// Ground-truth scene; `base` anchors relative paths.
    pub fn build_scene(&self, base: &Path) -> Result<Scene, ConfigError> {
        let geometry = self.geometry(base)?;
        let material = self.material()?;
        let cameras = self.camera_list()?;
        let (h, w, radiance) = self.environment_grid(base)?;
        let mut params = ParameterStore::new();
        let env = EnvironmentPyramid::allocate(&mut params, h, w, 1, 1.0).map_err(RenderError::from)?;
        env.set_radiance(params.values_mut(), &radiance).map_err(RenderError::from)?;
        let occluders = self.occluders(base, &cameras, &mut params)?;
        let scene = Scene {
            geometry,
            material,
            env,
            occluders,
            cameras,
            params,
        };
        scene.validate()?;
        Ok(scene)
    }
}
