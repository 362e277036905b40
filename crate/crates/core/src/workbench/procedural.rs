//! Procedural stand-ins for scanned assets: smooth random skies, cap
//! occluders around each camera and toy scenes assembled from them.

use crate::envlight::{texel_center, EnvironmentPyramid};
use crate::geometry::{ObjectGeometry, Vec3};
use crate::material::{BrdfKind, BrdfParams, MaterialModel};
use crate::occluder::{eval_sh_all, sh_count, Cap, CapMasks, OccluderModel};
use crate::renderer::{orbit_cameras, Camera, RenderError, Scene};
use crate::sampling::{Purpose, RandomStream, StreamKey};
use crate::ParameterStore;

/// Exponentiated random SH field per channel: texel radiance
/// `mean · exp(Σ a_lm Y_lm)` with `a_lm` uniform in `±amplitude/(l+1)`.
pub fn procedural_environment(height: usize, width: usize, degree: usize, amplitude: f64, mean: f64, seed: u64) -> Vec<[f64; 3]> {
    let n = sh_count(degree);
    let mut rs = RandomStream::new(StreamKey::new(seed, Purpose::Dataset).pass(0xe5));
    let mut coeffs = vec![[0.0; 3]; n];
    for l in 0..=degree {
        let scale = amplitude / (l + 1) as f64;
        for i in l * l..(l + 1) * (l + 1) {
            for c in 0..3 {
                coeffs[i][c] = if l == 0 { 0.0 } else { rs.range(-scale, scale) };
            }
        }
    }
    let mut y = vec![0.0; n];
    let mut out = Vec::with_capacity(height * width);
    for r in 0..height {
        for c in 0..width {
            eval_sh_all(degree, &texel_center(height, width, r, c), &mut y);
            let mut rgb = [0.0; 3];
            for (k, v) in rgb.iter_mut().enumerate() {
                let s: f64 = coeffs.iter().zip(&y).map(|(a, b)| a[k] * b).sum();
                *v = mean * s.exp();
            }
            out.push(rgb);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CapLayout {
    pub per_frame: usize,
    pub radius_min: f64,
    pub radius_max: f64,
    /// Largest angular offset of a cap centre from the camera direction.
    pub spread: f64,
}

impl Default for CapLayout {
    fn default() -> Self {
        CapLayout {
            per_frame: 1,
            radius_min: 0.4,
            radius_max: 0.7,
            spread: 0.6,
        }
    }
}

/// Direction at angle `angle` from `axis`, rotated by `turn` around it.
fn tilt(axis: &Vec3, angle: f64, turn: f64) -> Vec3 {
    let helper = if axis.z.abs() < 0.9 { Vec3::z() } else { Vec3::x() };
    let u = axis.cross(&helper).normalize();
    let v = axis.cross(&u);
    (axis * angle.cos() + (u * turn.cos() + v * turn.sin()) * angle.sin()).normalize()
}

/// Binary cap occluders on each camera's shell, clustered around the
/// direction toward the camera.
pub fn cap_occluders(cameras: &[Camera], layout: &CapLayout, seed: u64) -> OccluderModel {
    let mut caps = Vec::with_capacity(cameras.len());
    for (t, cam) in cameras.iter().enumerate() {
        let mut rs = RandomStream::new(StreamKey::new(seed, Purpose::Dataset).frame(t as u64).pass(0xca9));
        let axis = cam.position.normalize();
        let frame_caps = (0..layout.per_frame)
            .map(|_| {
                let angle = layout.spread * rs.uniform().sqrt();
                let turn = rs.range(0.0, std::f64::consts::TAU);
                Cap {
                    center: tilt(&axis, angle, turn),
                    radius: rs.range(layout.radius_min, layout.radius_max),
                }
            })
            .collect();
        caps.push(frame_caps);
    }
    OccluderModel::Caps(CapMasks {
        radii: cameras.iter().map(Camera::distance).collect(),
        caps,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyScene {
    pub frames: usize,
    pub size: usize,
    pub camera_radius: f64,
    pub env_height: usize,
    pub env_width: usize,
    pub env_degree: usize,
    pub env_amplitude: f64,
    pub env_mean: f64,
    pub albedo: f64,
    pub caps: Option<CapLayout>,
    pub seed: u64,
}

impl Default for ToyScene {
    fn default() -> Self {
        ToyScene {
            frames: 16,
            size: 64,
            camera_radius: 4.0,
            env_height: 10,
            env_width: 20,
            env_degree: 4,
            env_amplitude: 1.5,
            env_mean: 1.0,
            albedo: 0.5,
            caps: Some(CapLayout::default()),
            seed: 1,
        }
    }
}

impl ToyScene {
    pub fn cameras(&self) -> Vec<Camera> {
        orbit_cameras(self.frames, self.camera_radius, 0.8, true, 0.6, self.size)
    }

    pub fn environment(&self) -> Vec<[f64; 3]> {
        procedural_environment(
            self.env_height,
            self.env_width,
            self.env_degree,
            self.env_amplitude,
            self.env_mean,
            self.seed,
        )
    }

    /// Ground-truth scene: unit sphere, Lambertian albedo, single-level
    /// environment holding the procedural sky.
    pub fn build(&self) -> Result<Scene, RenderError> {
        let mut params = ParameterStore::new();
        let env = EnvironmentPyramid::allocate(&mut params, self.env_height, self.env_width, 1, 1.0)?;
        env.set_radiance(params.values_mut(), &self.environment())?;
        let cameras = self.cameras();
        let occluders = match &self.caps {
            Some(layout) => cap_occluders(&cameras, layout, self.seed),
            None => OccluderModel::None,
        };
        let scene = Scene {
            geometry: ObjectGeometry::unit_sphere(),
            material: MaterialModel::Uniform {
                kind: BrdfKind::Lambertian,
                params: BrdfParams::new([self.albedo; 3], 1.0, 0.0),
            },
            env,
            occluders,
            cameras,
            params,
        };
        scene.validate()?;
        Ok(scene)
    }
}
