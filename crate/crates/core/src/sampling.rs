//! Keyed random streams, the stratified unit-square pattern, and
//! Trowbridge-Reitz half-vector sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{Frame, Vec3};
use crate::material::ggx_distribution;

/// Number of extra uniform pairs drawn when a GGX sample has zero density.
const GGX_MAX_RETRIES: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplingError {
    #[error("stratified sample count {0} must be a power of two with odd exponent")]
    BadStratifiedCount(usize),
}

/// What a stream is used for; part of the key so streams never collide.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Primary = 1,
    Material = 2,
    Light = 3,
    Retry = 4,
    Batch = 5,
    Init = 6,
    Dataset = 7,
    Test = 8,
}

/// Identifies a random stream. Identical keys give identical sequences.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub pixel: u64,
    pub frame: u64,
    pub pass: u64,
    pub purpose: Purpose,
}

impl StreamKey {
    pub fn new(seed: u64, purpose: Purpose) -> Self {
        StreamKey {
            seed,
            pixel: 0,
            frame: 0,
            pass: 0,
            purpose,
        }
    }

    pub fn pixel(mut self, pixel: u64) -> Self {
        self.pixel = pixel;
        self
    }

    pub fn frame(mut self, frame: u64) -> Self {
        self.frame = frame;
        self
    }

    pub fn pass(mut self, pass: u64) -> Self {
        self.pass = pass;
        self
    }

    pub fn purpose(mut self, purpose: Purpose) -> Self {
        self.purpose = purpose;
        self
    }

    fn seed_bytes(&self) -> [u8; 32] {
        let mut h = splitmix64(self.seed ^ 0x5851_f42d_4c95_7f2d);
        for word in [self.pixel, self.frame, self.pass, self.purpose as u64] {
            h = splitmix64(h ^ word.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        }
        let mut out = [0u8; 32];
        let mut s = h;
        for chunk in out.chunks_exact_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        out
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based stream (ChaCha8) seeded from a hashed [`StreamKey`].
#[derive(Clone, Debug)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(key: StreamKey) -> Self {
        RandomStream {
            rng: ChaCha8Rng::from_seed(key.seed_bytes()),
        }
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_pair(&mut self) -> (f64, f64) {
        (self.uniform(), self.uniform())
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
}

/// `n` pairs in `[0,1)²`, one per cell of an `(s/2) × s` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct StratifiedBatch {
    pub n: usize,
    pub s: usize,
    pub pairs: Vec<(f64, f64)>,
}

impl StratifiedBatch {
    /// Grid cell `(row, col)` that pair `i` was drawn in.
    pub fn cell(&self, i: usize) -> (usize, usize) {
        (i / self.s, i % self.s)
    }
}

/// Grid width for `n` samples, or an error unless `log2(n)` is an odd
/// integer (the `v` coordinate leaves `[0,1)` otherwise).
pub fn stratified_width(n: usize) -> Result<usize, SamplingError> {
    if n == 0 || !n.is_power_of_two() || n.trailing_zeros() % 2 == 0 {
        return Err(SamplingError::BadStratifiedCount(n));
    }
    let log2 = n.trailing_zeros() as usize;
    Ok(1 << ((log2 + 1) / 2))
}

pub fn stratified_2d(stream: &mut RandomStream, n: usize) -> Result<StratifiedBatch, SamplingError> {
    let s = stratified_width(n)?;
    let sf = s as f64;
    let below_one = 1.0 - f64::EPSILON / 2.0;
    let pairs = (0..n)
        .map(|i| {
            let (r, t) = stream.uniform_pair();
            let u = ((i % s) as f64 + r) / sf;
            let v = 2.0 * ((i / s) as f64 + t) / sf;
            (u.min(below_one), v.min(below_one))
        })
        .collect();
    Ok(StratifiedBatch { n, s, pairs })
}

/// Incoming direction drawn from the material lobe, with its solid-angle
/// density. Both are constants for differentiation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectionSample {
    pub direction: Vec3,
    pub pdf: f64,
}

/// Maps a unit-square pair to a Trowbridge-Reitz half vector around `n`
/// and reflects `wo` about it.
pub fn ggx_reflect(alpha: f64, wo: &Vec3, n: &Vec3, u: f64, v: f64) -> Vec3 {
    let a2 = alpha * alpha;
    let cos2 = ((1.0 - u) / (1.0 + (a2 - 1.0) * u)).clamp(0.0, 1.0);
    let cos_t = cos2.sqrt();
    let sin_t = (1.0 - cos2).max(0.0).sqrt();
    let phi = 2.0 * std::f64::consts::PI * v;
    let frame = Frame::from_normal(n);
    let h = frame.to_world(&Vec3::new(sin_t * phi.cos(), sin_t * phi.sin(), cos_t));
    (2.0 * wo.dot(&h) * h - wo).normalize()
}

/// Samples an incoming direction; `(u, v)` is tried first, then up to
/// [`GGX_MAX_RETRIES`] fresh pairs from `retry` if the density is zero.
pub fn sample_ggx(
    alpha: f64,
    wo: &Vec3,
    n: &Vec3,
    (u, v): (f64, f64),
    retry: &mut RandomStream,
) -> Option<DirectionSample> {
    let mut uv = (u, v);
    for _ in 0..=GGX_MAX_RETRIES {
        let wi = ggx_reflect(alpha, wo, n, uv.0, uv.1);
        let pdf = pdf_ggx(alpha, wo, &wi, n);
        if pdf > 0.0 && pdf.is_finite() {
            return Some(DirectionSample { direction: wi, pdf });
        }
        uv = retry.uniform_pair();
    }
    None
}

/// Solid-angle density of [`ggx_reflect`]: `D(n·h) |h·n| / (4 (h·wo)_+)`.
pub fn pdf_ggx(alpha: f64, wo: &Vec3, wi: &Vec3, n: &Vec3) -> f64 {
    let sum = wi + wo;
    let len = sum.norm();
    if len < 1e-12 {
        return 0.0;
    }
    let h = sum / len;
    let cos_h = n.dot(&h);
    let h_wo = h.dot(wo);
    if h_wo <= 0.0 {
        return 0.0;
    }
    ggx_distribution(cos_h, alpha) * cos_h.abs() / (4.0 * h_wo)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stratified_512_covers_every_cell_once() {
        let mut rs = RandomStream::new(StreamKey::new(1, Purpose::Test));
        let b = stratified_2d(&mut rs, 512).unwrap();
        assert_eq!(b.s, 32);
        let mut hits = vec![0u32; 512];
        for &(u, v) in &b.pairs {
            assert!((0.0..1.0).contains(&u) && (0.0..1.0).contains(&v));
            let col = (u * 32.0) as usize;
            let row = (v * 16.0) as usize;
            hits[row * 32 + col] += 1;
        }
        assert!(hits.iter().all(|&h| h == 1));
    }

    #[test]
    fn stratified_smallest_case() {
        let mut rs = RandomStream::new(StreamKey::new(2, Purpose::Test));
        let b = stratified_2d(&mut rs, 2).unwrap();
        assert_eq!(b.s, 2);
        assert!(b.pairs[0].0 < 0.5 && b.pairs[1].0 >= 0.5);
        assert!(b.pairs.iter().all(|p| p.1 < 1.0));
    }

    #[test]
    fn stratified_rejects_even_exponents() {
        let mut rs = RandomStream::new(StreamKey::new(3, Purpose::Test));
        for n in [0, 1, 4, 16, 256, 100] {
            assert_eq!(
                stratified_2d(&mut rs, n),
                Err(SamplingError::BadStratifiedCount(n))
            );
        }
    }

    #[test]
    fn streams_are_keyed() {
        let k = StreamKey::new(9, Purpose::Light).pixel(4).frame(2).pass(7);
        let a: Vec<f64> = {
            let mut s = RandomStream::new(k);
            (0..8).map(|_| s.uniform()).collect()
        };
        let b: Vec<f64> = {
            let mut s = RandomStream::new(k);
            (0..8).map(|_| s.uniform()).collect()
        };
        let c: Vec<f64> = {
            let mut s = RandomStream::new(k.pass(8));
            (0..8).map(|_| s.uniform()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn ggx_pdf_zero_for_opposite_direction() {
        let n = Vec3::z();
        let wo = Vec3::new(0.3, 0.0, 1.0).normalize();
        assert_eq!(pdf_ggx(0.5, &wo, &(-wo), &n), 0.0);
    }

    #[test]
    fn ggx_mirror_direction_has_peak_density() {
        let n = Vec3::z();
        let wo = Vec3::new(1.0, 0.0, 1.0).normalize();
        let mirror = Vec3::new(-wo.x, -wo.y, wo.z);
        let peak = pdf_ggx(0.02, &wo, &mirror, &n);
        for d in [0.01, 0.05, 0.2] {
            let off = Vec3::new(-wo.x + d, 0.0, wo.z).normalize();
            assert!(pdf_ggx(0.02, &wo, &off, &n) < peak);
        }
    }
}
