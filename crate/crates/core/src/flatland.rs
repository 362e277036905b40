//! One-dimensional analogue of the inverse problem: a unit disk lit by a
//! circular environment, with arc occluders at distance `r`. Used to study
//! how occluders change the conditioning of illumination recovery.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::sampling::{Purpose, RandomStream, StreamKey};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlatlandError {
    #[error("occluder distance {0} must exceed the unit object radius")]
    Distance(f64),
    #[error("occluder width {0} must lie in (0, 2π)")]
    Width(f64),
    #[error("matrix must be square, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error("sample counts must be positive")]
    Empty,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LightSpectrum {
    Uniform,
    /// Amplitude `1/f^a` with seeded random phases, shifted positive.
    PowerLaw { exponent: f64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlatlandConfig {
    /// Surface samples per observation.
    pub surface_samples: usize,
    /// Illumination samples.
    pub light_samples: usize,
    /// Observation count; 0 means a single unoccluded observation.
    pub frames: usize,
    pub width: f64,
    pub distance: f64,
    /// Occluder centres; uniform over `[0, 2π)` when empty.
    pub centers: Vec<f64>,
}

impl Default for FlatlandConfig {
    fn default() -> Self {
        FlatlandConfig {
            surface_samples: 512,
            light_samples: 512,
            frames: 1,
            width: 0.7,
            distance: 10.0,
            centers: Vec::new(),
        }
    }
}

impl FlatlandConfig {
    pub fn validate(&self) -> Result<(), FlatlandError> {
        if !(self.distance > 1.0) {
            return Err(FlatlandError::Distance(self.distance));
        }
        if !(self.width > 0.0 && self.width < TAU) {
            return Err(FlatlandError::Width(self.width));
        }
        if self.surface_samples == 0 || self.light_samples == 0 {
            return Err(FlatlandError::Empty);
        }
        Ok(())
    }

    pub fn occluder_centers(&self) -> Vec<f64> {
        if !self.centers.is_empty() {
            return self.centers.clone();
        }
        (0..self.frames).map(|t| TAU * t as f64 / self.frames as f64).collect()
    }
}

/// Distance along direction φ from surface point λ to the circle of
/// radius `r`, with `δ = λ − φ`.
pub fn ray_length(delta: f64, r: f64) -> f64 {
    let c = delta.cos();
    (c * c + r * r - 1.0).sqrt() - c
}

/// Polar angle of the point where the ray from `(cos λ, sin λ)` along φ
/// meets the occluder circle.
pub fn shell_angle(lambda: f64, phi: f64, r: f64) -> f64 {
    let t = ray_length(lambda - phi, r);
    (lambda.sin() + t * phi.sin()).atan2(lambda.cos() + t * phi.cos())
}

/// Representative of `x` in `(−π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

/// Transmission: 0 when the ray hits the arc centred at `center`.
pub fn flat_mask(lambda: f64, phi: f64, center: f64, width: f64, r: f64) -> f64 {
    if wrap_angle(shell_angle(lambda, phi, r) - center).abs() < 0.5 * width {
        0.0
    } else {
        1.0
    }
}

fn surface_angle(i: usize, n: usize) -> f64 {
    TAU * i as f64 / n as f64
}

/// `(cos(λ_i − φ_j))_+` with the angle taken from integer offsets, so that
/// `N = M` gives an exactly circulant kernel with exact zeros at ±π/2.
fn clamped_cosine(i: usize, j: usize, n: usize, m: usize) -> f64 {
    let period = (n * m) as i64;
    let q = (i as i64 * m as i64 - j as i64 * n as i64).rem_euclid(period);
    if 4 * q >= period && 4 * q <= 3 * period {
        return 0.0;
    }
    (TAU * q as f64 / period as f64).cos()
}

/// Discretized clamped-cosine kernel `C[i, j] = (cos(λ_i − φ_j))_+ · 2π/M`.
pub fn convolution_matrix(n: usize, m: usize) -> DMatrix<f64> {
    let dphi = TAU / m as f64;
    DMatrix::from_fn(n, m, |i, j| clamped_cosine(i, j, n, m) * dphi)
}

/// Stacked illumination-to-image matrix, one `N × M` block per occluder.
pub fn assemble_a(cfg: &FlatlandConfig) -> Result<DMatrix<f64>, FlatlandError> {
    cfg.validate()?;
    let (n, m) = (cfg.surface_samples, cfg.light_samples);
    let centers = cfg.occluder_centers();
    let c = convolution_matrix(n, m);
    if centers.is_empty() {
        return Ok(c);
    }
    let mut a = DMatrix::zeros(n * centers.len(), m);
    for (t, &theta) in centers.iter().enumerate() {
        for i in 0..n {
            let lambda = surface_angle(i, n);
            for j in 0..m {
                let k = c[(i, j)];
                if k > 0.0 {
                    a[(t * n + i, j)] = k * flat_mask(lambda, surface_angle(j, m), theta, cfg.width, cfg.distance);
                }
            }
        }
    }
    Ok(a)
}

/// Linear map from the occluder values to one frame's image: `C · diag(L)`.
pub fn occluder_matrix(light: &[f64], n: usize) -> DMatrix<f64> {
    let mut b = convolution_matrix(n, light.len());
    for (j, &l) in light.iter().enumerate() {
        b.column_mut(j).scale_mut(l);
    }
    b
}

/// Illumination samples for a spectrum model.
pub fn illumination(spectrum: &LightSpectrum, m: usize) -> Vec<f64> {
    match *spectrum {
        LightSpectrum::Uniform => vec![1.0; m],
        LightSpectrum::PowerLaw { exponent, seed } => {
            let mut rs = RandomStream::new(StreamKey::new(seed, Purpose::Dataset).pass(0xf1a7));
            let phases: Vec<f64> = (1..=m / 2).map(|_| rs.range(0.0, TAU)).collect();
            let raw: Vec<f64> = (0..m)
                .map(|j| {
                    let phi = surface_angle(j, m);
                    phases
                        .iter()
                        .enumerate()
                        .map(|(k, p)| {
                            let f = (k + 1) as f64;
                            f.powf(-exponent) * (f * phi + p).cos()
                        })
                        .sum()
                })
                .collect();
            let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            // Strictly positive, with the floor a tenth of the swing.
            let floor = 0.1 * (hi - lo).max(1e-12);
            raw.iter().map(|v| v - lo + floor).collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SingularSpectrum {
    /// Descending, divided by the largest.
    pub values: Vec<f64>,
    /// The largest singular value itself.
    pub largest: f64,
    /// DFT bin `0..=M/2` each right singular vector was assigned to.
    pub frequencies: Vec<usize>,
    /// Largest normalized value assigned to each bin, if any.
    pub per_frequency: Vec<Option<f64>>,
}

/// Normalized singular values of `a` (via QR when `a` is tall) and their
/// assignment to illumination frequencies by maximal DFT energy.
pub fn singular_spectrum(a: &DMatrix<f64>) -> SingularSpectrum {
    let m = a.ncols();
    let core = if a.nrows() > m { a.clone().qr().r() } else { a.clone() };
    let svd = core.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let top = svd.singular_values[order[0]];
    let scale = if top > 0.0 { 1.0 / top } else { 0.0 };
    let values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i] * scale).collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    let bins = m / 2 + 1;
    let mut per_frequency = vec![None; bins];
    let mut frequencies = Vec::with_capacity(order.len());
    for (rank, &i) in order.iter().enumerate() {
        let mut buf: Vec<Complex64> = v_t.row(i).iter().map(|&x| Complex64::new(x, 0.0)).collect();
        fft.process(&mut buf);
        let mut energy = vec![0.0; bins];
        for (k, z) in buf.iter().enumerate() {
            energy[k.min(m - k)] += z.norm_sqr();
        }
        let f = (0..bins).max_by(|&x, &y| energy[x].total_cmp(&energy[y])).unwrap_or(0);
        frequencies.push(f);
        let v = values[rank];
        per_frequency[f] = Some(per_frequency[f].map_or(v, |p: f64| p.max(v)));
    }
    SingularSpectrum {
        values,
        largest: top,
        frequencies,
        per_frequency,
    }
}

/// `F X F^H` with the unitary DFT `F`.
pub fn dft_conjugate(x: &DMatrix<f64>) -> Result<DMatrix<Complex64>, FlatlandError> {
    let n = x.nrows();
    if x.ncols() != n {
        return Err(FlatlandError::NotSquare(x.nrows(), x.ncols()));
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let norm = 1.0 / n as f64;
    let mut z = x.map(|v| Complex64::new(v, 0.0));
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        buf.copy_from_slice(z.column(j).as_slice());
        fwd.process(&mut buf);
        z.column_mut(j).iter_mut().zip(&buf).for_each(|(d, s)| *d = *s);
    }
    // Right-multiplying by F^H is an unnormalized inverse DFT of each row.
    for i in 0..n {
        for (j, b) in buf.iter_mut().enumerate() {
            *b = z[(i, j)];
        }
        inv.process(&mut buf);
        for (j, b) in buf.iter().enumerate() {
            z[(i, j)] = *b * norm;
        }
    }
    Ok(z)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FourierReport {
    /// Column of the largest-magnitude entry per row.
    pub row_argmax: Vec<usize>,
    /// `|Z_ii|² / Σ_j |Z_ij|²` per row.
    pub diagonal_fraction: Vec<f64>,
    /// Rows whose norm is below `1e-9` of the largest row norm.
    pub null_rows: Vec<bool>,
    /// Off-diagonal share of the total energy.
    pub off_diagonal_energy: f64,
    pub magnitudes: DMatrix<f64>,
}

impl FourierReport {
    /// Share of rows whose maximum sits on the diagonal.
    pub fn diagonal_max_fraction(&self) -> f64 {
        let n = self.row_argmax.len();
        if n == 0 {
            return 0.0;
        }
        (0..n).filter(|&i| self.row_argmax[i] == i).count() as f64 / n as f64
    }
}

pub fn fourier_diagonalization(x: &DMatrix<f64>) -> Result<FourierReport, FlatlandError> {
    let z = dft_conjugate(x)?;
    let n = z.nrows();
    let magnitudes = z.map(|c| c.norm());
    let mut row_argmax = Vec::with_capacity(n);
    let mut diagonal_fraction = Vec::with_capacity(n);
    let mut row_energy = Vec::with_capacity(n);
    let (mut total, mut off) = (0.0, 0.0);
    for i in 0..n {
        let row = magnitudes.row(i);
        let e: f64 = row.iter().map(|v| v * v).sum();
        let j = (0..n).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap_or(0);
        row_argmax.push(j);
        diagonal_fraction.push(if e > 0.0 { row[i] * row[i] / e } else { 0.0 });
        row_energy.push(e);
        total += e;
        off += row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v * v).sum::<f64>();
    }
    let max_norm = row_energy.iter().cloned().fold(0.0, f64::max).sqrt();
    let null_rows = row_energy.iter().map(|e| e.sqrt() < 1e-9 * max_norm).collect();
    Ok(FourierReport {
        row_argmax,
        diagonal_fraction,
        null_rows,
        off_diagonal_energy: if total > 0.0 { off / total } else { 0.0 },
        magnitudes,
    })
}

/// `AᵀA`, accumulated block by block.
pub fn gram(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.tr_mul(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ray_length_head_on() {
        assert!((ray_length(0.0, 10.0) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn outward_ray_hits_arc_at_zero() {
        assert!(shell_angle(0.0, 0.0, 10.0).abs() < 1e-15);
        assert_eq!(flat_mask(0.0, 0.0, 0.0, 0.7, 10.0), 0.0);
        assert_eq!(flat_mask(0.0, 0.0, PI, 0.7, 10.0), 1.0);
    }

    #[test]
    fn unoccluded_rows_integrate_cosine() {
        let c = convolution_matrix(64, 512);
        for i in 0..64 {
            assert!((c.row(i).sum() - 2.0).abs() < 1e-3);
        }
    }

    #[test]
    fn identity_spectrum_is_flat() {
        let s = singular_spectrum(&DMatrix::identity(16, 16));
        assert!(s.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn rejects_bad_geometry() {
        let cfg = FlatlandConfig {
            distance: 0.5,
            ..Default::default()
        };
        assert_eq!(assemble_a(&cfg), Err(FlatlandError::Distance(0.5)));
    }
}
