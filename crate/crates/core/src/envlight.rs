//! Far-field illumination as an exponentiated coarse-to-fine pyramid of
//! equirectangular grids, and its piecewise-constant sampling table.

use std::f64::consts::{PI, TAU};

use crate::autodiff::{ParamCtx, ParamGroup, ParamId, ParameterStore, PlainCtx};
use crate::geometry::{from_spherical, to_spherical, Vec3};
use crate::sampling::DirectionSample;

pub const MAX_LEVELS: usize = 8;
const MAX_TAPS: usize = 4 * MAX_LEVELS;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("pyramid needs 1..={MAX_LEVELS} levels, got {0}")]
    Levels(usize),
    #[error("environment grid must be at least 1x1")]
    EmptyGrid,
    #[error("radiance grid is {got} texels, expected {expected}")]
    GridSize { got: usize, expected: usize },
    #[error("radiance must be positive and finite to take its log")]
    NonPositive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LevelShape {
    pub height: usize,
    pub width: usize,
    /// Offset of this level's first texel inside the parameter block.
    pub offset: usize,
}

/// `L(ω) = exp(Σ_k a^k L_k(ω))` with level 0 the coarsest grid. Texel values
/// are stored RGB-interleaved in a [`ParameterStore`] block.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvironmentPyramid {
    height: usize,
    width: usize,
    base: f64,
    levels: Vec<LevelShape>,
    start: ParamId,
}

impl EnvironmentPyramid {
    /// Zero texels (radiance 1). Level `k` is
    /// `ceil(H/2^{K−1−k}) × ceil(W/2^{K−1−k})`.
    pub fn allocate(
        store: &mut ParameterStore,
        height: usize,
        width: usize,
        levels: usize,
        base: f64,
    ) -> Result<Self, EnvError> {
        if levels == 0 || levels > MAX_LEVELS {
            return Err(EnvError::Levels(levels));
        }
        if height == 0 || width == 0 {
            return Err(EnvError::EmptyGrid);
        }
        let mut shapes = Vec::with_capacity(levels);
        let mut offset = 0;
        for k in 0..levels {
            let div = 1usize << (levels - 1 - k);
            let shape = LevelShape {
                height: height.div_ceil(div),
                width: width.div_ceil(div),
                offset,
            };
            offset += shape.height * shape.width * 3;
            shapes.push(shape);
        }
        let start = store.allocate("environment", ParamGroup::Environment, offset, 0.0);
        Ok(EnvironmentPyramid {
            height,
            width,
            base,
            levels: shapes,
            start,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn levels(&self) -> &[LevelShape] {
        &self.levels
    }

    pub fn start(&self) -> ParamId {
        self.start
    }

    pub fn param_len(&self) -> usize {
        let last = self.levels.last().expect("at least one level");
        last.offset + last.height * last.width * 3
    }

    /// Parameter id of a texel channel.
    pub fn texel_id(&self, level: usize, row: usize, col: usize, channel: usize) -> ParamId {
        let s = &self.levels[level];
        self.start + (s.offset + (row * s.width + col) * 3 + channel) as ParamId
    }

    /// Bilinear taps over all levels as `(red-channel id, weight)`; azimuth
    /// wraps, elevation clamps.
    fn taps(&self, dir: &Vec3, out: &mut [(ParamId, f64); MAX_TAPS]) -> usize {
        let (theta, phi) = to_spherical(dir);
        let mut n = 0;
        let mut scale = 1.0;
        for s in &self.levels {
            let y = theta / PI * s.height as f64 - 0.5;
            let x = phi / TAU * s.width as f64 - 0.5;
            let (y0, x0) = (y.floor(), x.floor());
            let (fy, fx) = (y - y0, x - x0);
            let clamp_row = |r: f64| (r.max(0.0) as usize).min(s.height - 1);
            let wrap_col = |c: f64| (c as i64).rem_euclid(s.width as i64) as usize;
            let rows = [(clamp_row(y0), 1.0 - fy), (clamp_row(y0 + 1.0), fy)];
            let cols = [(wrap_col(x0), 1.0 - fx), (wrap_col(x0 + 1.0), fx)];
            for (r, wr) in rows {
                for (c, wc) in cols {
                    let id = self.start + (s.offset + (r * s.width + c) * 3) as ParamId;
                    out[n] = (id, scale * wr * wc);
                    n += 1;
                }
            }
            scale *= self.base;
        }
        n
    }

    /// RGB radiance along `dir`.
    pub fn eval<C: ParamCtx>(&self, ctx: &C, dir: &Vec3) -> [C::R; 3] {
        let mut taps = [(0, 0.0); MAX_TAPS];
        let n = self.taps(dir, &mut taps);
        std::array::from_fn(|c| {
            let mut terms = taps;
            for t in &mut terms[..n] {
                t.0 += c as ParamId;
            }
            crate::autodiff::Real::exp(ctx.param_affine(0.0, &terms[..n]))
        })
    }

    pub fn eval_plain(&self, values: &[f64], dir: &Vec3) -> [f64; 3] {
        self.eval(&PlainCtx::new(values), dir)
    }

    /// Direction of a texel centre on the finest grid.
    pub fn texel_center(&self, row: usize, col: usize) -> Vec3 {
        texel_center(self.height, self.width, row, col)
    }

    /// Radiance at every finest-grid texel centre, row-major.
    pub fn texel_radiance(&self, values: &[f64]) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(self.height * self.width);
        for r in 0..self.height {
            for c in 0..self.width {
                out.push(self.eval_plain(values, &self.texel_center(r, c)));
            }
        }
        out
    }

    /// Loads an `H×W` radiance grid into the finest level (others zeroed) so
    /// texel centres reproduce it exactly.
    pub fn set_radiance(&self, values: &mut [f64], radiance: &[[f64; 3]]) -> Result<(), EnvError> {
        let expected = self.height * self.width;
        if radiance.len() != expected {
            return Err(EnvError::GridSize {
                got: radiance.len(),
                expected,
            });
        }
        if radiance.iter().flatten().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(EnvError::NonPositive);
        }
        let block = &mut values[self.start as usize..self.start as usize + self.param_len()];
        block.fill(0.0);
        let k = self.levels.len() - 1;
        let scale = self.base.powi(k as i32);
        let off = self.levels[k].offset;
        for (i, px) in radiance.iter().enumerate() {
            for c in 0..3 {
                block[off + i * 3 + c] = px[c].ln() / scale;
            }
        }
        Ok(())
    }
}

pub fn texel_center(height: usize, width: usize, row: usize, col: usize) -> Vec3 {
    from_spherical(
        PI * (row as f64 + 0.5) / height as f64,
        TAU * (col as f64 + 0.5) / width as f64,
    )
}

/// Finest-grid texel containing `dir`.
pub fn texel_of(height: usize, width: usize, dir: &Vec3) -> (usize, usize) {
    let (theta, phi) = to_spherical(dir);
    let r = ((theta / PI * height as f64) as usize).min(height - 1);
    let c = ((phi / TAU * width as f64) as usize).min(width - 1);
    (r, c)
}

/// Solid angle of a texel in row `row`.
pub fn texel_solid_angle(height: usize, width: usize, row: usize) -> f64 {
    let top = PI * row as f64 / height as f64;
    let bottom = PI * (row + 1) as f64 / height as f64;
    TAU / width as f64 * (top.cos() - bottom.cos())
}

/// Inverse-CDF tables with texel mass `∝ Σ_c L̃_c · sinθ_row`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvSamplingTable {
    height: usize,
    width: usize,
    mass: Vec<f64>,
    row_cdf: Vec<f64>,
    col_cdf: Vec<f64>,
}

impl EnvSamplingTable {
    pub fn build(pyr: &EnvironmentPyramid, values: &[f64]) -> Self {
        Self::from_radiance(pyr.height, pyr.width, &pyr.texel_radiance(values))
    }

    pub fn from_radiance(height: usize, width: usize, radiance: &[[f64; 3]]) -> Self {
        assert_eq!(radiance.len(), height * width);
        let mut mass: Vec<f64> = radiance
            .iter()
            .enumerate()
            .map(|(i, px)| {
                let row = i / width;
                let s = (PI * (row as f64 + 0.5) / height as f64).sin();
                (px[0] + px[1] + px[2]) * s
            })
            .collect();
        let total: f64 = mass.iter().sum();
        mass.iter_mut().for_each(|m| *m /= total);
        let mut row_cdf = Vec::with_capacity(height + 1);
        let mut col_cdf = Vec::with_capacity(height * (width + 1));
        let mut acc = 0.0;
        row_cdf.push(0.0);
        for r in 0..height {
            let row = &mass[r * width..(r + 1) * width];
            let row_sum: f64 = row.iter().sum();
            let mut c_acc = 0.0;
            col_cdf.push(0.0);
            for &m in row {
                c_acc += m;
                col_cdf.push(c_acc / row_sum);
            }
            *col_cdf.last_mut().unwrap() = 1.0;
            acc += row_sum;
            row_cdf.push(acc);
        }
        *row_cdf.last_mut().unwrap() = 1.0;
        EnvSamplingTable {
            height,
            width,
            mass,
            row_cdf,
            col_cdf,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn mass(&self, row: usize, col: usize) -> f64 {
        self.mass[row * self.width + col]
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    /// Maps `(u, v) ∈ [0,1)²` to a direction; `v` picks the row, `u` the
    /// column, and the remainders place the point uniformly in `(φ, cosθ)`.
    pub fn sample(&self, u: f64, v: f64) -> DirectionSample {
        let (row, fv) = invert(&self.row_cdf, v);
        let cdf = &self.col_cdf[row * (self.width + 1)..(row + 1) * (self.width + 1)];
        let (col, fu) = invert(cdf, u);
        let top = (PI * row as f64 / self.height as f64).cos();
        let bottom = (PI * (row + 1) as f64 / self.height as f64).cos();
        let cos_t = (top + fv * (bottom - top)).clamp(-1.0, 1.0);
        let phi = TAU * (col as f64 + fu) / self.width as f64;
        let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
        let direction = Vec3::new(sin_t * phi.cos(), sin_t * phi.sin(), cos_t);
        DirectionSample {
            direction,
            pdf: self.pdf(&direction),
        }
    }

    /// Solid-angle density of [`EnvSamplingTable::sample`].
    pub fn pdf(&self, dir: &Vec3) -> f64 {
        let (r, c) = texel_of(self.height, self.width, dir);
        self.mass(r, c) / texel_solid_angle(self.height, self.width, r)
    }
}

/// Bin index and the position within it.
fn invert(cdf: &[f64], x: f64) -> (usize, f64) {
    let bins = cdf.len() - 1;
    // Skip zero-width bins by searching for the first edge beyond x.
    let i = (cdf.partition_point(|&e| e <= x).max(1) - 1).min(bins - 1);
    let width = cdf[i + 1] - cdf[i];
    let f = if width > 0.0 { ((x - cdf[i]) / width).clamp(0.0, 1.0 - f64::EPSILON) } else { 0.5 };
    (i, f)
}
