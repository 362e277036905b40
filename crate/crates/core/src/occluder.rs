//! Per-frame masks for light blocked outside the field of view, evaluated at
//! the point where a shadow ray leaves the camera-radius shell.

use std::f64::consts::{PI, TAU};

use crate::autodiff::{ParamCtx, ParamGroup, ParamId, ParameterStore, PlainCtx, Real};
use crate::envlight::EnvironmentPyramid;
use crate::geometry::{from_spherical, shell_intersect, to_spherical, GeometryError, Vec3};

/// Rec. 709 luminance weights.
pub const LUMINANCE: [f64; 3] = [0.2126, 0.7152, 0.0722];
pub const DEFAULT_BIAS: f64 = 100.0;
pub const DEFAULT_DEGREE: usize = 24;

pub fn sh_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Flat index `l² + l + m`.
pub fn sh_index(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

/// All real orthonormal harmonics up to `degree` at `dir` (Condon-Shortley
/// phase), written to `out[..sh_count(degree)]`.
pub fn eval_sh_all(degree: usize, dir: &Vec3, out: &mut [f64]) {
    let x = dir.z.clamp(-1.0, 1.0);
    let s = (1.0 - x * x).max(0.0).sqrt();
    let phi = dir.y.atan2(dir.x);
    let (s1, c1) = phi.sin_cos();
    // Normalized associated Legendre P̄_l^m, sweeping m then l.
    let mut pmm = 0.5 / PI.sqrt();
    let (mut cm, mut sm) = (1.0, 0.0);
    for m in 0..=degree {
        if m > 0 {
            pmm *= -((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s;
            let c = cm * c1 - sm * s1;
            sm = sm * c1 + cm * s1;
            cm = c;
        }
        let mut put = |l: usize, p: f64| {
            if m == 0 {
                out[sh_index(l, 0)] = p;
            } else {
                out[sh_index(l, m as i64)] = std::f64::consts::SQRT_2 * p * cm;
                out[sh_index(l, -(m as i64))] = std::f64::consts::SQRT_2 * p * sm;
            }
        };
        put(m, pmm);
        if m == degree {
            break;
        }
        let mut p_prev = pmm;
        let mut p = ((2 * m + 3) as f64).sqrt() * x * pmm;
        put(m + 1, p);
        for l in m + 2..=degree {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            let next = a * (x * p - b * p_prev);
            p_prev = p;
            p = next;
            put(l, p);
        }
    }
}

/// Single harmonic `Y_l^m(dir)`.
pub fn eval_sh(l: usize, m: i64, dir: &Vec3) -> f64 {
    assert!(m.unsigned_abs() as usize <= l, "|m| must not exceed l");
    let mut buf = vec![0.0; sh_count(l)];
    eval_sh_all(l, dir, &mut buf);
    buf[sh_index(l, m)]
}

/// Spherical cap `{ω : ω·center ≥ cos(radius)}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cap {
    pub center: Vec3,
    pub radius: f64,
}

impl Cap {
    pub fn contains(&self, dir: &Vec3) -> bool {
        dir.dot(&self.center) >= self.radius.cos()
    }
}

/// Sigmoid of a spherical-harmonic expansion per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicMasks {
    pub degree: usize,
    pub bias: f64,
    pub radii: Vec<f64>,
    start: ParamId,
}

/// Sigmoid of a per-texel logit grid per frame (bilinear lookup).
#[derive(Clone, Debug, PartialEq)]
pub struct TexelMasks {
    pub height: usize,
    pub width: usize,
    pub bias: f64,
    pub radii: Vec<f64>,
    start: ParamId,
}

/// Binary masks made of analytic caps; zero inside any cap.
#[derive(Clone, Debug, PartialEq)]
pub struct CapMasks {
    pub radii: Vec<f64>,
    pub caps: Vec<Vec<Cap>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum OccluderModel {
    None,
    Harmonic(HarmonicMasks),
    Texel(TexelMasks),
    Caps(CapMasks),
}

/// Reusable buffers for mask evaluation.
#[derive(Clone, Debug, Default)]
pub struct MaskScratch {
    ylm: Vec<f64>,
    terms: Vec<(ParamId, f64)>,
}

impl OccluderModel {
    /// Zero coefficients: every mask starts at `sigmoid(bias)`.
    pub fn harmonic(store: &mut ParameterStore, degree: usize, bias: f64, radii: Vec<f64>) -> Self {
        let start = store.allocate("occluder.sh", ParamGroup::Occluder, radii.len() * sh_count(degree), 0.0);
        OccluderModel::Harmonic(HarmonicMasks {
            degree,
            bias,
            radii,
            start,
        })
    }

    pub fn texel(store: &mut ParameterStore, height: usize, width: usize, bias: f64, radii: Vec<f64>) -> Self {
        let start = store.allocate("occluder.texel", ParamGroup::Occluder, radii.len() * height * width, 0.0);
        OccluderModel::Texel(TexelMasks {
            height,
            width,
            bias,
            radii,
            start,
        })
    }

    pub fn frames(&self) -> Option<usize> {
        self.radii().map(<[f64]>::len)
    }

    pub fn radii(&self) -> Option<&[f64]> {
        match self {
            OccluderModel::None => None,
            OccluderModel::Harmonic(h) => Some(&h.radii),
            OccluderModel::Texel(t) => Some(&t.radii),
            OccluderModel::Caps(c) => Some(&c.radii),
        }
    }

    pub fn radius(&self, t: usize) -> Option<f64> {
        self.radii().map(|r| r[t])
    }

    pub fn is_none(&self) -> bool {
        matches!(self, OccluderModel::None)
    }

    /// Parameter id of coefficient `(l, m)` for frame `t`.
    pub fn coefficient_id(&self, t: usize, l: usize, m: i64) -> Option<ParamId> {
        match self {
            OccluderModel::Harmonic(h) => Some(h.start + (t * sh_count(h.degree) + sh_index(l, m)) as ParamId),
            _ => None,
        }
    }

    /// Mask on the shell direction `shell` for frame `t`; `None` means
    /// no model (transmission 1).
    pub fn mask<C: ParamCtx>(&self, ctx: &C, t: usize, shell: &Vec3, scratch: &mut MaskScratch) -> Option<C::R> {
        match self {
            OccluderModel::None => None,
            OccluderModel::Caps(c) => {
                let blocked = c.caps[t].iter().any(|cap| cap.contains(shell));
                Some(C::R::cst(if blocked { 0.0 } else { 1.0 }))
            }
            OccluderModel::Harmonic(h) => {
                let n = sh_count(h.degree);
                scratch.ylm.resize(n, 0.0);
                eval_sh_all(h.degree, shell, &mut scratch.ylm);
                let first = h.start + (t * n) as ParamId;
                scratch.terms.clear();
                scratch
                    .terms
                    .extend(scratch.ylm.iter().enumerate().map(|(i, &y)| (first + i as ParamId, y)));
                Some(ctx.param_affine(h.bias, &scratch.terms).sigmoid())
            }
            OccluderModel::Texel(g) => {
                let (theta, phi) = to_spherical(shell);
                let y = theta / PI * g.height as f64 - 0.5;
                let x = phi / TAU * g.width as f64 - 0.5;
                let (y0, x0) = (y.floor(), x.floor());
                let (fy, fx) = (y - y0, x - x0);
                let row = |r: f64| (r.max(0.0) as usize).min(g.height - 1);
                let col = |c: f64| (c as i64).rem_euclid(g.width as i64) as usize;
                let first = g.start as usize + t * g.height * g.width;
                let id = |r: usize, c: usize| (first + r * g.width + c) as ParamId;
                let terms = [
                    (id(row(y0), col(x0)), (1.0 - fy) * (1.0 - fx)),
                    (id(row(y0), col(x0 + 1.0)), (1.0 - fy) * fx),
                    (id(row(y0 + 1.0), col(x0)), fy * (1.0 - fx)),
                    (id(row(y0 + 1.0), col(x0 + 1.0)), fy * fx),
                ];
                Some(ctx.param_affine(g.bias, &terms).sigmoid())
            }
        }
    }

    pub fn mask_plain(&self, values: &[f64], t: usize, shell: &Vec3) -> f64 {
        self.mask(&PlainCtx::new(values), t, shell, &mut MaskScratch::default())
            .unwrap_or(1.0)
    }

    /// Mask seen from surface point `x` along `wi`.
    pub fn mask_value<C: ParamCtx>(
        &self,
        ctx: &C,
        t: usize,
        x: &Vec3,
        wi: &Vec3,
        scratch: &mut MaskScratch,
    ) -> Result<Option<C::R>, GeometryError> {
        match self.radius(t) {
            None => Ok(None),
            Some(r) => {
                let s = shell_intersect(x, wi, r)?;
                Ok(self.mask(ctx, t, &s, scratch))
            }
        }
    }
}

/// Midpoint rule on equal-area cells in `(cosθ, φ)`.
pub fn sphere_quadrature(rows: usize, cols: usize, mut f: impl FnMut(&Vec3) -> f64) -> f64 {
    let cell = 4.0 * PI / (rows * cols) as f64;
    let mut acc = 0.0;
    for i in 0..rows {
        let z = 1.0 - 2.0 * (i as f64 + 0.5) / rows as f64;
        let theta = z.acos();
        for j in 0..cols {
            acc += f(&from_spherical(theta, TAU * (j as f64 + 0.5) / cols as f64));
        }
    }
    acc * cell
}

/// Grid used for blocked-energy and mask-error integrals.
pub const QUADRATURE_GRID: (usize, usize) = (128, 256);

/// `∫ (1 − M_t(ω)) · luminance(L(ω)) dω`.
pub fn blocked_energy(occ: &OccluderModel, occ_values: &[f64], t: usize, env: &EnvironmentPyramid, env_values: &[f64]) -> f64 {
    if occ.is_none() {
        return 0.0;
    }
    let mut scratch = MaskScratch::default();
    let ctx = PlainCtx::new(occ_values);
    sphere_quadrature(QUADRATURE_GRID.0, QUADRATURE_GRID.1, |w| {
        let m = occ.mask(&ctx, t, w, &mut scratch).unwrap_or(1.0);
        let l = env.eval_plain(env_values, w);
        (1.0 - m) * (LUMINANCE[0] * l[0] + LUMINANCE[1] * l[1] + LUMINANCE[2] * l[2])
    })
}

/// `∫ |M_a − M_b| dω` for frame `t`.
pub fn mask_l1(a: &OccluderModel, a_values: &[f64], b: &OccluderModel, b_values: &[f64], t: usize) -> f64 {
    sphere_quadrature(QUADRATURE_GRID.0, QUADRATURE_GRID.1, |w| {
        (a.mask_plain(a_values, t, w) - b.mask_plain(b_values, t, w)).abs()
    })
}
