//! Direct-illumination Monte Carlo renderer with frozen sample sets.
//!
//! Rendering a pixel is split in two: [`prepare_pixel`] draws every random
//! quantity (primary ray, hit, secondary directions, MIS weights, visibility,
//! shell directions) from keyed streams using plain numbers, and
//! [`integrate`] evaluates the differentiable integrand over that frozen set.
//! Gradients therefore never flow through sampling, and finite-difference
//! checks can reuse the exact same samples.

use std::f64::consts::PI;

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamCtx, ParameterStore, PlainCtx, Real};
use crate::envlight::{EnvSamplingTable, EnvironmentPyramid};
use crate::geometry::{shell_intersect, shell_point, GeometryError, ObjectGeometry, Ray, SurfaceHit, Vec3};
use crate::material::{MaterialModel, Remap};
use crate::occluder::{MaskScratch, OccluderModel};
use crate::sampling::{pdf_ggx, sample_ggx, stratified_2d, Purpose, RandomStream, SamplingError, StreamKey};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RenderError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("frame {frame} out of range ({frames} cameras)")]
    Frame { frame: usize, frames: usize },
    #[error(transparent)]
    Environment(#[from] crate::envlight::EnvError),
    #[error("{0} occluder frames for {1} cameras")]
    FrameCount(usize, usize),
}

/// Pinhole camera looking down its local −z axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub position: Vec3,
    /// World-from-camera rotation; columns are right, up, back.
    pub rotation: Matrix3<f64>,
    /// Vertical field of view in radians.
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn look_at(position: Vec3, target: Vec3, up: Vec3, fov_y: f64, width: usize, height: usize) -> Self {
        let back = (position - target).normalize();
        let mut right = up.cross(&back);
        if right.norm() < 1e-9 {
            right = Vec3::x().cross(&back);
            if right.norm() < 1e-9 {
                right = Vec3::y().cross(&back);
            }
        }
        let right = right.normalize();
        let true_up = back.cross(&right);
        Camera {
            position,
            rotation: Matrix3::from_columns(&[right, true_up, back]),
            fov_y,
            width,
            height,
        }
    }

    /// Ray through image position `(px + jx, py + jy)`, `py` counted from
    /// the top row.
    pub fn ray(&self, px: usize, py: usize, jx: f64, jy: f64) -> Ray {
        let tan = (0.5 * self.fov_y).tan();
        let aspect = self.width as f64 / self.height as f64;
        let x = (2.0 * (px as f64 + jx) / self.width as f64 - 1.0) * tan * aspect;
        let y = (1.0 - 2.0 * (py as f64 + jy) / self.height as f64) * tan;
        Ray::new(self.position, self.rotation * Vec3::new(x, y, -1.0))
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn distance(&self) -> f64 {
        self.position.norm()
    }
}

/// Cameras on a sphere of `radius` aimed at the origin. `spiral` spreads
/// them over a Fibonacci spiral between ±`elevation`; otherwise they form a
/// ring at that elevation.
pub fn orbit_cameras(count: usize, radius: f64, elevation: f64, spiral: bool, fov_y: f64, size: usize) -> Vec<Camera> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|t| {
            let (el, az) = if spiral {
                let z = elevation.sin() * (1.0 - 2.0 * (t as f64 + 0.5) / count as f64);
                (z.asin(), golden * t as f64)
            } else {
                (elevation, 2.0 * PI * t as f64 / count as f64)
            };
            let pos = radius * Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            Camera::look_at(pos, Vec3::zeros(), Vec3::z(), fov_y, size, size)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Heuristic {
    #[default]
    Balance,
    /// Exponent-2 power heuristic.
    Power,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSettings {
    pub material_samples: usize,
    pub light_samples: usize,
    pub aa_passes: usize,
    pub heuristic: Heuristic,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            material_samples: 512,
            light_samples: 512,
            aa_passes: 16,
            heuristic: Heuristic::Balance,
        }
    }
}

/// Geometry, assets, cameras and the parameter vector they read from.
#[derive(Clone, Debug)]
pub struct Scene {
    pub geometry: ObjectGeometry,
    pub material: MaterialModel,
    pub env: EnvironmentPyramid,
    pub occluders: OccluderModel,
    pub cameras: Vec<Camera>,
    pub params: ParameterStore,
}

impl Scene {
    pub fn validate(&self) -> Result<(), RenderError> {
        if let Some(radii) = self.occluders.radii() {
            if radii.len() != self.cameras.len() {
                return Err(RenderError::FrameCount(radii.len(), self.cameras.len()));
            }
            let inner = self.geometry.bounding_radius();
            if let Some(&r) = radii.iter().find(|&&r| !(inner < r)) {
                return Err(GeometryError::OutsideShell { radius: inner, shell: r }.into());
            }
        }
        Ok(())
    }

    pub fn sampling_table(&self) -> EnvSamplingTable {
        EnvSamplingTable::build(&self.env, self.params.values())
    }

    /// Replaces the illumination by a fixed radiance grid (single level).
    pub fn replace_environment(&mut self, height: usize, width: usize, radiance: &[[f64; 3]]) -> Result<(), RenderError> {
        let env = EnvironmentPyramid::allocate(&mut self.params, height, width, 1, 1.0)?;
        env.set_radiance(self.params.values_mut(), radiance)?;
        self.env = env;
        Ok(())
    }

    fn camera(&self, t: usize) -> Result<&Camera, RenderError> {
        self.cameras.get(t).ok_or(RenderError::Frame {
            frame: t,
            frames: self.cameras.len(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Technique {
    Material,
    Light,
}

/// One secondary direction with everything the integrand needs frozen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SecondarySample {
    pub direction: Vec3,
    /// `(n·ω)_+` times the MIS-weighted inverse density.
    pub weight: f64,
    pub shell: Option<Vec3>,
    pub technique: Technique,
    /// Index of the stratified cell the direction was drawn from.
    pub stratum: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PixelSamples {
    Background {
        frame: usize,
        direction: Vec3,
        shell: Option<Vec3>,
    },
    Surface {
        frame: usize,
        hit: SurfaceHit,
        wo: Vec3,
        material_count: usize,
        light_count: usize,
        /// Only directions with non-zero cosine and visibility.
        samples: Vec<SecondarySample>,
    },
}

/// Stream keys for one pixel evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelKey {
    pub seed: u64,
    pub frame: usize,
    pub pixel: usize,
    pub pass: u64,
}

impl PixelKey {
    pub fn stream(&self, purpose: Purpose) -> RandomStream {
        RandomStream::new(
            StreamKey::new(self.seed, purpose)
                .pixel(self.pixel as u64)
                .frame(self.frame as u64)
                .pass(self.pass),
        )
    }
}

/// MIS weight of `technique` given the sample-count-scaled densities
/// `a = s_m p_m` and `b = s_ℓ p_ℓ`; the two techniques' weights sum to 1.
pub fn mis_weight(heuristic: Heuristic, technique: Technique, a: f64, b: f64) -> f64 {
    let own = if technique == Technique::Material { a } else { b };
    match heuristic {
        Heuristic::Balance => own / (a + b),
        Heuristic::Power => own * own / (a * a + b * b),
    }
}

/// Draws the secondary sample set at a surface hit.
pub fn prepare_surface(
    scene: &Scene,
    table: &EnvSamplingTable,
    frame: usize,
    hit: &SurfaceHit,
    wo: &Vec3,
    settings: &RenderSettings,
    key: &PixelKey,
) -> Result<PixelSamples, RenderError> {
    let (s_m, s_l) = (settings.material_samples, settings.light_samples);
    let n = hit.normal;
    let x = hit.position;
    let mut samples = Vec::with_capacity(s_m + s_l);
    if n.dot(wo) > 0.0 {
        let values = scene.params.values();
        let alpha = scene
            .material
            .shading(&PlainCtx::new(values), &x)
            .sampling_roughness();
        let radius = scene.occluders.radius(frame);
        let (sm, sl) = (s_m as f64, s_l as f64);
        let heuristic = settings.heuristic;
        let mut push = |dir: Vec3, technique: Technique, stratum: usize| -> Result<(), RenderError> {
            let cos = n.dot(&dir);
            if cos <= 0.0 || !scene.geometry.visible(&x, &n, &dir) {
                return Ok(());
            }
            let pm = pdf_ggx(alpha, wo, &dir, &n);
            let pl = table.pdf(&dir);
            let (a, b) = (sm * pm, sl * pl);
            let own = if technique == Technique::Material { a } else { b };
            let w = mis_weight(heuristic, technique, a, b) / own;
            if !(w.is_finite() && w > 0.0) {
                return Ok(());
            }
            let shell = match radius {
                Some(r) => Some(shell_intersect(&x, &dir, r)?),
                None => None,
            };
            samples.push(SecondarySample {
                direction: dir,
                weight: cos * w,
                shell,
                technique,
                stratum: stratum as u32,
            });
            Ok(())
        };
        if s_m > 0 {
            let mut stream = key.stream(Purpose::Material);
            let mut retry = key.stream(Purpose::Retry);
            for (i, &(u, v)) in stratified_2d(&mut stream, s_m)?.pairs.iter().enumerate() {
                if let Some(s) = sample_ggx(alpha, wo, &n, (u, v), &mut retry) {
                    push(s.direction, Technique::Material, i)?;
                }
            }
        }
        if s_l > 0 {
            let mut stream = key.stream(Purpose::Light);
            for (i, &(u, v)) in stratified_2d(&mut stream, s_l)?.pairs.iter().enumerate() {
                push(table.sample(u, v).direction, Technique::Light, i)?;
            }
        }
    }
    Ok(PixelSamples::Surface {
        frame,
        hit: *hit,
        wo: *wo,
        material_count: s_m,
        light_count: s_l,
        samples,
    })
}

/// Draws a primary ray through the pixel footprint and its sample set.
pub fn prepare_pixel(
    scene: &Scene,
    table: &EnvSamplingTable,
    px: usize,
    py: usize,
    settings: &RenderSettings,
    key: &PixelKey,
) -> Result<PixelSamples, RenderError> {
    let cam = scene.camera(key.frame)?;
    let (jx, jy) = key.stream(Purpose::Primary).uniform_pair();
    let ray = cam.ray(px, py, jx, jy);
    match scene.geometry.intersect(&ray) {
        Some(hit) => prepare_surface(scene, table, key.frame, &hit, &(-ray.direction), settings, key),
        None => Ok(PixelSamples::Background {
            frame: key.frame,
            direction: ray.direction,
            shell: scene
                .occluders
                .radius(key.frame)
                .map(|r| shell_point(&ray.origin, &ray.direction, r)),
        }),
    }
}

/// Per-sample radiance factors `L(ω)·M(ω)·f(ω)` for a surface sample set.
fn for_each_contribution<C: ParamCtx>(
    scene: &Scene,
    ctx: &C,
    samples: &PixelSamples,
    scratch: &mut MaskScratch,
    mut f: impl FnMut(&SecondarySample, [C::R; 3]),
) {
    let PixelSamples::Surface { frame, hit, wo, samples, .. } = samples else {
        return;
    };
    let shading = scene.material.shading(ctx, &hit.position);
    for s in samples {
        let l = scene.env.eval(ctx, &s.direction);
        let fr = shading.eval(&hit.normal, &s.direction, wo);
        let lm = match s.shell.and_then(|sh| scene.occluders.mask(ctx, *frame, &sh, scratch)) {
            Some(m) => l.map(|c| c * m),
            None => l,
        };
        f(s, [lm[0] * fr[0], lm[1] * fr[1], lm[2] * fr[2]]);
    }
}

/// Differentiable pixel radiance over a frozen sample set.
pub fn integrate<C: ParamCtx>(scene: &Scene, ctx: &C, samples: &PixelSamples, scratch: &mut MaskScratch) -> [C::R; 3] {
    match samples {
        PixelSamples::Background { frame, direction, shell } => {
            let l = scene.env.eval(ctx, direction);
            match shell.and_then(|sh| scene.occluders.mask(ctx, *frame, &sh, scratch)) {
                Some(m) => l.map(|c| c * m),
                None => l,
            }
        }
        PixelSamples::Surface { .. } => {
            let mut terms: [Vec<(C::R, f64)>; 3] = Default::default();
            for_each_contribution(scene, ctx, samples, scratch, |s, y| {
                for c in 0..3 {
                    terms[c].push((y[c], s.weight));
                }
            });
            terms.map(|t| C::R::linear(&t, 0.0))
        }
    }
}

/// Estimate and its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShadeResult {
    pub value: [f64; 3],
    pub std_error: [f64; 3],
}

/// Plain estimate with a conservative standard error: one sample per
/// stratum, so neighbouring strata are collapsed in pairs and
/// `Var ≈ Σ_pairs (c_a − c_b)²` per technique.
pub fn shade_stats(scene: &Scene, samples: &PixelSamples) -> ShadeResult {
    let values = scene.params.values();
    let ctx = PlainCtx::new(values);
    let mut scratch = MaskScratch::default();
    match samples {
        PixelSamples::Background { .. } => ShadeResult {
            value: integrate(scene, &ctx, samples, &mut scratch),
            std_error: [0.0; 3],
        },
        PixelSamples::Surface {
            material_count,
            light_count,
            ..
        } => {
            let mut per: [Vec<[f64; 3]>; 2] = [vec![[0.0; 3]; *material_count], vec![[0.0; 3]; *light_count]];
            for_each_contribution(scene, &ctx, samples, &mut scratch, |s, y| {
                let k = if s.technique == Technique::Material { 0 } else { 1 };
                per[k][s.stratum as usize] = y.map(|v| v * s.weight);
            });
            let mut value = [0.0; 3];
            let mut var = [0.0; 3];
            for cells in &per {
                for pair in cells.chunks(2) {
                    for c in 0..3 {
                        value[c] += pair.iter().map(|p| p[c]).sum::<f64>();
                        if let [a, b] = pair {
                            var[c] += (a[c] - b[c]).powi(2);
                        }
                    }
                }
            }
            ShadeResult {
                value,
                std_error: var.map(f64::sqrt),
            }
        }
    }
}

/// Shades a known hit (no primary-ray randomness).
pub fn shade(
    scene: &Scene,
    table: &EnvSamplingTable,
    frame: usize,
    hit: &SurfaceHit,
    wo: &Vec3,
    settings: &RenderSettings,
    key: &PixelKey,
) -> Result<ShadeResult, RenderError> {
    let s = prepare_surface(scene, table, frame, hit, wo, settings, key)?;
    Ok(shade_stats(scene, &s))
}

/// One random-ray estimate of pixel `(px, py)`.
pub fn render_pixel(
    scene: &Scene,
    table: &EnvSamplingTable,
    px: usize,
    py: usize,
    settings: &RenderSettings,
    key: &PixelKey,
) -> Result<[f64; 3], RenderError> {
    let s = prepare_pixel(scene, table, px, py, settings, key)?;
    Ok(integrate(scene, &PlainCtx::new(scene.params.values()), &s, &mut MaskScratch::default()))
}

/// Linear RGB image, rows top to bottom.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            pixels: vec![[0.0; 3]; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }
}

/// Average of `aa_passes` independent pixel estimates, pass `p` keyed by `p`.
pub fn render_image(scene: &Scene, frame: usize, settings: &RenderSettings, seed: u64) -> Result<Image, RenderError> {
    scene.validate()?;
    let cam = scene.camera(frame)?;
    let table = scene.sampling_table();
    let (w, h) = (cam.width, cam.height);
    let passes = settings.aa_passes.max(1);
    let pixels: Result<Vec<[f64; 3]>, RenderError> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let mut sum = [0.0; 3];
            for pass in 0..passes {
                let key = PixelKey {
                    seed,
                    frame,
                    pixel: i,
                    pass: pass as u64,
                };
                let v = render_pixel(scene, &table, i % w, i / w, settings, &key)?;
                for c in 0..3 {
                    sum[c] += v[c];
                }
            }
            Ok(sum.map(|s| s / passes as f64))
        })
        .collect();
    Ok(Image {
        width: w,
        height: h,
        pixels: pixels?,
    })
}

/// Side length of the subpixel grid used for coverage and albedo images.
pub const COVERAGE_GRID: usize = 4;

/// Albedo image (mean over covered subpixels) and the object mask (pixels
/// whose every subpixel sample hits the object).
pub fn render_albedo(scene: &Scene, frame: usize) -> Result<(Image, Vec<bool>), RenderError> {
    let cam = scene.camera(frame)?;
    let (w, h) = (cam.width, cam.height);
    let values = scene.params.values();
    let g = COVERAGE_GRID;
    let out: Vec<([f64; 3], bool)> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let mut sum = [0.0; 3];
            let mut hits = 0;
            for sy in 0..g {
                for sx in 0..g {
                    let ray = cam.ray(i % w, i / w, (sx as f64 + 0.5) / g as f64, (sy as f64 + 0.5) / g as f64);
                    if let Some(hit) = scene.geometry.intersect(&ray) {
                        let p = scene.material.params_at(values, &hit.position);
                        for c in 0..3 {
                            sum[c] += p.albedo[c];
                        }
                        hits += 1;
                    }
                }
            }
            let a = if hits > 0 { sum.map(|s| s / hits as f64) } else { [0.0; 3] };
            (a, hits == g * g)
        })
        .collect();
    let (pixels, mask): (Vec<_>, Vec<_>) = out.into_iter().unzip();
    Ok((
        Image {
            width: w,
            height: h,
            pixels,
        },
        mask,
    ))
}

/// Substitutions for re-rendering a recovered scene. Occluders are always
/// removed.
#[derive(Clone, Debug, Default)]
pub struct Relight {
    /// `(height, width, radiance)` replacing the illumination.
    pub environment: Option<(usize, usize, Vec<[f64; 3]>)>,
    pub remap: Option<Remap>,
    pub camera: Option<Camera>,
}

pub fn relight(scene: &Scene, frame: usize, with: &Relight, settings: &RenderSettings, seed: u64) -> Result<Image, RenderError> {
    let mut s = scene.clone();
    s.occluders = OccluderModel::None;
    if let Some((h, w, rad)) = &with.environment {
        s.replace_environment(*h, *w, rad)?;
    }
    if let Some(r) = &with.remap {
        s.material = s.material.remapped(r);
    }
    let frame = match with.camera {
        Some(c) => {
            s.cameras = vec![c];
            0
        }
        None => frame,
    };
    render_image(&s, frame, settings, seed)
}
