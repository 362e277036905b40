//! Joint recovery of illumination, materials and occluder masks by Adam on
//! the two-render debiased loss.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamGroup, ParameterStore, PlainCtx, Real, Tape, TapeCtx};
use crate::envlight::{texel_center, EnvSamplingTable, EnvironmentPyramid};
use crate::geometry::ObjectGeometry;
use crate::material::{BrdfKind, MaterialField, MaterialModel};
use crate::occluder::{blocked_energy, mask_l1, MaskScratch, OccluderModel, DEFAULT_BIAS, DEFAULT_DEGREE};
use crate::renderer::{integrate, prepare_pixel, Camera, Image, PixelKey, RenderError, RenderSettings, Scene};
use crate::sampling::{Purpose, RandomStream, StreamKey};

/// Gradient accumulators; fixed so the reduction order never depends on
/// the thread count.
const LANES: usize = 8;
pub const PSNR_CAP: f64 = 99.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("non-finite loss at step {step}, frame {frame}, pixel {pixel}")]
    NonFinite { step: usize, frame: usize, pixel: usize },
    #[error("diverged at step {step}: loss {loss:e} stayed above {factor}x the initial {initial:e}")]
    Diverged { step: usize, loss: f64, initial: f64, factor: f64 },
    #[error("no trainable pixels in the dataset")]
    NoPixels,
}

/// How occluders are represented during the solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MaskModel {
    #[default]
    Harmonic,
    /// Per-texel logits on the environment grid.
    Texel,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub lr_env_material: f64,
    pub lr_occluder: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Pixels per step.
    pub batch: usize,
    pub steps: usize,
    pub seed: u64,
    pub snapshot_every: usize,
    pub render: RenderSettings,
    pub mask_model: MaskModel,
    pub sh_degree: usize,
    pub mask_bias: f64,
    /// Logit grid of the per-texel mask baseline.
    pub mask_height: usize,
    pub mask_width: usize,
    pub env_height: usize,
    pub env_width: usize,
    pub env_levels: usize,
    pub env_base: f64,
    pub brdf: BrdfKind,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    /// Train on background pixels too (object pixels only by default).
    pub include_background: bool,
    pub divergence_factor: f64,
    pub divergence_patience: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lr_env_material: 3e-3,
            lr_occluder: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch: 1 << 12,
            steps: 1000,
            seed: 0,
            snapshot_every: 100,
            render: RenderSettings {
                aa_passes: 1,
                ..RenderSettings::default()
            },
            mask_model: MaskModel::Harmonic,
            sh_degree: DEFAULT_DEGREE,
            mask_bias: DEFAULT_BIAS,
            mask_height: 32,
            mask_width: 64,
            env_height: 50,
            env_width: 100,
            env_levels: 5,
            env_base: 2.0,
            brdf: BrdfKind::Ggx,
            hidden_layers: 4,
            hidden_width: 128,
            include_background: false,
            divergence_factor: 1e3,
            divergence_patience: 100,
        }
    }
}

/// One observed image with its pose.
#[derive(Clone, Debug)]
pub struct Frame {
    pub camera: Camera,
    pub radius: f64,
    pub image: Image,
    /// Pixels fully covered by the object.
    pub mask: Vec<bool>,
}

/// Known assets used only for evaluation.
#[derive(Clone, Debug, Default)]
pub struct GroundTruth {
    /// `(height, width, radiance)`.
    pub env: Option<(usize, usize, Vec<[f64; 3]>)>,
    pub albedo: Vec<Image>,
    pub occluders: Option<OccluderModel>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub geometry: ObjectGeometry,
    pub frames: Vec<Frame>,
    pub truth: GroundTruth,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Metrics {
    pub env_rmse: f64,
    pub env_relative_mse: f64,
    pub albedo_psnr: f64,
    /// Per frame `(mask L1 error, blocked energy)`.
    pub mask_pairs: Vec<(f64, f64)>,
    pub mask_correlation: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub loss: f64,
    pub env_rmse: f64,
    pub rel_mse: f64,
    pub psnr: f64,
}

pub const CSV_HEADER: &str = "step,loss,env_rmse,rel_mse,psnr";

impl Snapshot {
    pub fn csv_row(&self) -> String {
        format!("{},{:e},{:e},{:e},{}", self.step, self.loss, self.env_rmse, self.rel_mse, self.psnr)
    }
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub scene: Scene,
    pub trace: Vec<Snapshot>,
    pub losses: Vec<f64>,
}

/// `Σ_c (Ĩ¹_c − I_c)(Ĩ²_c − I_c)`.
pub fn debiased_loss<R: Real>(a: &[R; 3], b: &[R; 3], target: &[f64; 3]) -> R {
    let terms: Vec<(R, f64)> = (0..3).map(|c| ((a[c] - target[c]) * (b[c] - target[c]), 1.0)).collect();
    R::linear(&terms, 0.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// Bias-corrected Adam with a learning rate per coordinate.
pub fn adam_step(values: &mut [f64], grads: &[f64], lrs: &[f64], state: &mut AdamState, beta1: f64, beta2: f64, eps: f64) {
    assert_eq!(values.len(), grads.len());
    assert_eq!(values.len(), lrs.len());
    assert_eq!(values.len(), state.m.len());
    state.t += 1;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    for i in 0..values.len() {
        let g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        values[i] -= lrs[i] * mh / (vh.sqrt() + eps);
    }
}

/// Learning rate of each parameter from its group.
pub fn learning_rates(store: &ParameterStore, config: &SolverConfig) -> Vec<f64> {
    store
        .group_map()
        .into_iter()
        .map(|g| match g {
            ParamGroup::Occluder => config.lr_occluder,
            ParamGroup::Material | ParamGroup::Environment => config.lr_env_material,
        })
        .collect()
}

/// Initial scene: unit illumination, open masks, material outputs at 0.5.
pub fn initialize(dataset: &Dataset, config: &SolverConfig) -> Result<Scene, SolveError> {
    let mut params = ParameterStore::new();
    let env = EnvironmentPyramid::allocate(&mut params, config.env_height, config.env_width, config.env_levels, config.env_base)
        .map_err(RenderError::from)?;
    let field = MaterialField::allocate(
        &mut params,
        config.hidden_layers,
        config.hidden_width,
        dataset.geometry.bounds(),
        config.seed,
    );
    let radii: Vec<f64> = dataset.frames.iter().map(|f| f.radius).collect();
    let occluders = match config.mask_model {
        MaskModel::None => OccluderModel::None,
        MaskModel::Harmonic => OccluderModel::harmonic(&mut params, config.sh_degree, config.mask_bias, radii),
        MaskModel::Texel => OccluderModel::texel(&mut params, config.mask_height, config.mask_width, config.mask_bias, radii),
    };
    let scene = Scene {
        geometry: dataset.geometry.clone(),
        material: MaterialModel::Field {
            kind: config.brdf,
            field,
        },
        env,
        occluders,
        cameras: dataset.frames.iter().map(|f| f.camera).collect(),
        params,
    };
    scene.validate()?;
    Ok(scene)
}

/// Loss and dense gradient over a batch of `(frame, pixel)` items.
pub fn batch_loss_and_gradient(
    scene: &Scene,
    table: &EnvSamplingTable,
    dataset: &Dataset,
    batch: &[(usize, usize)],
    settings: &RenderSettings,
    seed: u64,
    step: usize,
) -> Result<(f64, Vec<f64>), SolveError> {
    let values = scene.params.values();
    let lane_len = batch.len().div_ceil(LANES).max(1);
    let lanes: Vec<Result<(f64, Vec<f64>), SolveError>> = batch
        .par_chunks(lane_len)
        .map(|items| {
            let tape = Tape::new();
            let mut grad = vec![0.0; values.len()];
            let mut loss = 0.0;
            let mut scratch = MaskScratch::default();
            for &(t, pixel) in items {
                let frame = &dataset.frames[t];
                let (px, py) = (pixel % frame.camera.width, pixel / frame.camera.width);
                let key = |k: u64| PixelKey {
                    seed,
                    frame: t,
                    pixel,
                    pass: 2 * step as u64 + k,
                };
                let s1 = prepare_pixel(scene, table, px, py, settings, &key(0))?;
                let s2 = prepare_pixel(scene, table, px, py, settings, &key(1))?;
                tape.clear();
                let ctx = TapeCtx::new(&tape, values);
                let a = integrate(scene, &ctx, &s1, &mut scratch);
                let b = integrate(scene, &ctx, &s2, &mut scratch);
                let l = debiased_loss(&a, &b, &frame.image.pixels[pixel]);
                if !l.value().is_finite() {
                    return Err(SolveError::NonFinite { step, frame: t, pixel });
                }
                loss += l.value();
                tape.backward_into(l, 1.0, &mut grad);
            }
            Ok((loss, grad))
        })
        .collect();
    let mut total = 0.0;
    let mut grad = vec![0.0; values.len()];
    for lane in lanes {
        let (l, g) = lane?;
        total += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    Ok((total, grad))
}

/// Trainable `(frame, pixel)` pairs.
pub fn trainable_pixels(dataset: &Dataset, include_background: bool) -> Vec<(usize, usize)> {
    dataset
        .frames
        .iter()
        .enumerate()
        .flat_map(|(t, f)| {
            f.mask
                .iter()
                .enumerate()
                .filter(move |(_, &m)| m || include_background)
                .map(move |(i, _)| (t, i))
        })
        .collect()
}

fn environment_errors(scene: &Scene, truth: &(usize, usize, Vec<[f64; 3]>)) -> (f64, f64) {
    let (h, w, rad) = truth;
    let values = scene.params.values();
    let (mut se, mut energy) = (0.0, 0.0);
    for r in 0..*h {
        for c in 0..*w {
            let est = scene.env.eval_plain(values, &texel_center(*h, *w, r, c));
            let gt = rad[r * w + c];
            for k in 0..3 {
                se += (est[k] - gt[k]).powi(2);
                energy += gt[k] * gt[k];
            }
        }
    }
    let n = (h * w * 3) as f64;
    ((se / n).sqrt(), se / energy)
}

/// PSNR of the albedo at object-pixel centres, capped at [`PSNR_CAP`].
pub fn albedo_psnr(scene: &Scene, dataset: &Dataset) -> Option<f64> {
    if dataset.truth.albedo.is_empty() {
        return None;
    }
    let values = scene.params.values();
    let (mut se, mut n) = (0.0, 0usize);
    for (t, frame) in dataset.frames.iter().enumerate() {
        let truth = &dataset.truth.albedo[t];
        for (i, &m) in frame.mask.iter().enumerate() {
            if !m {
                continue;
            }
            let ray = frame.camera.ray(i % frame.camera.width, i / frame.camera.width, 0.5, 0.5);
            if let Some(hit) = scene.geometry.intersect(&ray) {
                let p = scene.material.params_at(values, &hit.position);
                for c in 0..3 {
                    se += (p.albedo[c] - truth.pixels[i][c]).powi(2);
                }
                n += 3;
            }
        }
    }
    (n > 0).then(|| psnr(se / n as f64))
}

/// `10 log10(1 / mse)` for unit-range signals.
pub fn psnr(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (-10.0 * mse.log10()).min(PSNR_CAP)
    }
}

pub fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    let n = pairs.len() as f64;
    if pairs.len() < 2 {
        return None;
    }
    let (mx, my) = pairs.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Compares a recovered scene against the dataset's ground truth.
pub fn compute_metrics(scene: &Scene, dataset: &Dataset) -> Metrics {
    let mut m = Metrics::default();
    if let Some(env) = &dataset.truth.env {
        (m.env_rmse, m.env_relative_mse) = environment_errors(scene, env);
    }
    m.albedo_psnr = albedo_psnr(scene, dataset).unwrap_or(f64::NAN);
    if let (Some(gt_occ), Some((h, w, rad))) = (&dataset.truth.occluders, &dataset.truth.env) {
        let mut store = ParameterStore::new();
        if let Ok(env) = EnvironmentPyramid::allocate(&mut store, *h, *w, 1, 1.0) {
            if env.set_radiance(store.values_mut(), rad).is_ok() {
                let frames = gt_occ.frames().unwrap_or(0);
                m.mask_pairs = (0..frames)
                    .map(|t| {
                        let err = mask_l1(&scene.occluders, scene.params.values(), gt_occ, &[], t);
                        let energy = blocked_energy(gt_occ, &[], t, &env, store.values());
                        (err, energy)
                    })
                    .collect();
                m.mask_correlation = pearson(&m.mask_pairs);
            }
        }
    }
    m
}

fn snapshot(scene: &Scene, dataset: &Dataset, step: usize, loss: f64) -> Snapshot {
    let (env_rmse, rel_mse) = dataset
        .truth
        .env
        .as_ref()
        .map(|e| environment_errors(scene, e))
        .unwrap_or((f64::NAN, f64::NAN));
    Snapshot {
        step,
        loss,
        env_rmse,
        rel_mse,
        psnr: albedo_psnr(scene, dataset).unwrap_or(f64::NAN),
    }
}

/// Runs `initialize` then `config.steps` Adam steps. `observer` sees each
/// snapshot (every `snapshot_every` steps and after the last one).
pub fn solve(dataset: &Dataset, config: &SolverConfig, observer: impl FnMut(&Snapshot, &Scene)) -> Result<SolveOutcome, SolveError> {
    let scene = initialize(dataset, config)?;
    solve_from(scene, dataset, config, observer)
}

/// [`solve`] from a caller-provided starting scene.
pub fn solve_from(
    mut scene: Scene,
    dataset: &Dataset,
    config: &SolverConfig,
    mut observer: impl FnMut(&Snapshot, &Scene),
) -> Result<SolveOutcome, SolveError> {
    let pixels = trainable_pixels(dataset, config.include_background);
    if pixels.is_empty() {
        return Err(SolveError::NoPixels);
    }
    let lrs = learning_rates(&scene.params, config);
    let mut state = AdamState::new(scene.params.len());
    let mut trace = Vec::new();
    let mut losses = Vec::with_capacity(config.steps);
    let mut initial: Option<f64> = None;
    let mut above = 0usize;
    let loss_seed = config.seed ^ 0x1055_5eed;
    for step in 0..config.steps {
        let mut rs = RandomStream::new(StreamKey::new(config.seed, Purpose::Batch).pass(step as u64));
        let batch: Vec<(usize, usize)> = (0..config.batch).map(|_| pixels[rs.below(pixels.len())]).collect();
        let table = scene.sampling_table();
        let (loss, grad) = batch_loss_and_gradient(&scene, &table, dataset, &batch, &config.render, loss_seed, step)?;
        let base = *initial.get_or_insert(loss.abs().max(f64::MIN_POSITIVE));
        if loss > config.divergence_factor * base {
            above += 1;
            if above >= config.divergence_patience {
                return Err(SolveError::Diverged {
                    step,
                    loss,
                    initial: base,
                    factor: config.divergence_factor,
                });
            }
        } else {
            above = 0;
        }
        adam_step(
            scene.params.values_mut(),
            &grad,
            &lrs,
            &mut state,
            config.beta1,
            config.beta2,
            config.epsilon,
        );
        losses.push(loss);
        let last = step + 1 == config.steps;
        if config.snapshot_every > 0 && (step % config.snapshot_every == 0 || last) {
            let s = snapshot(&scene, dataset, step, loss);
            observer(&s, &scene);
            trace.push(s);
        }
    }
    Ok(SolveOutcome { scene, trace, losses })
}

/// Plain render of the debiased loss for one pixel (no gradients).
pub fn pixel_loss_plain(scene: &Scene, table: &EnvSamplingTable, frame: &Frame, t: usize, pixel: usize, settings: &RenderSettings, seed: u64, pass: u64) -> Result<f64, RenderError> {
    let (px, py) = (pixel % frame.camera.width, pixel / frame.camera.width);
    let ctx = PlainCtx::new(scene.params.values());
    let mut scratch = MaskScratch::default();
    let mut render = |k: u64| -> Result<[f64; 3], RenderError> {
        let key = PixelKey { seed, frame: t, pixel, pass: 2 * pass + k };
        let s = prepare_pixel(scene, table, px, py, settings, &key)?;
        Ok(integrate(scene, &ctx, &s, &mut scratch))
    };
    let (a, b) = (render(0)?, render(1)?);
    Ok(debiased_loss(&a, &b, &frame.image.pixels[pixel]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_degenerate_cases() {
        assert_eq!(debiased_loss(&[2.0, 1.0, 0.0], &[3.0, 1.0, 5.0], &[0.0; 3]), 7.0);
        let a = [0.4, 0.7, 0.2];
        let t = [0.1, 0.9, 0.3];
        let sq: f64 = (0..3).map(|c| (a[c] - t[c]) * (a[c] - t[c])).sum();
        assert!((debiased_loss(&a, &a, &t) - sq).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut x = vec![1.0, -2.0, 0.5];
        let mut st = AdamState::new(3);
        adam_step(&mut x, &[1.0, 1.0, -3.0], &[0.1, 0.1, 0.1], &mut st, 0.9, 0.999, 1e-8);
        assert!((x[0] - 0.9).abs() < 1e-6);
        assert!((x[1] + 2.1).abs() < 1e-6);
        assert!((x[2] - 0.6).abs() < 1e-6);
        let before = x.clone();
        let mut st = AdamState::new(3);
        adam_step(&mut x, &[0.0; 3], &[0.1; 3], &mut st, 0.9, 0.999, 1e-8);
        assert_eq!(x, before);
    }

    #[test]
    fn adam_solves_quadratic() {
        let target = [1.5, -0.5, 3.0];
        let mut x = vec![0.0; 3];
        let mut st = AdamState::new(3);
        for _ in 0..200 {
            let g: Vec<f64> = x.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
            adam_step(&mut x, &g, &[0.1; 3], &mut st, 0.9, 0.999, 1e-8);
        }
        let mut st = AdamState::new(3);
        for _ in 0..2000 {
            let g: Vec<f64> = x.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
            adam_step(&mut x, &g, &[0.01; 3], &mut st, 0.9, 0.999, 1e-8);
        }
        let err: f64 = x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-3, "{x:?}");
    }

    #[test]
    fn psnr_spot_values() {
        assert!((psnr(0.01) - 20.0).abs() < 1e-12);
        assert_eq!(psnr(0.0), PSNR_CAP);
    }
}
