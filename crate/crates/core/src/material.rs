//! Lambertian + GGX reflectance and the positional-encoded coordinate network
//! that maps surface points to BRDF parameters.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamCtx, ParamGroup, ParamId, ParameterStore, Real};
use crate::geometry::Vec3;
use crate::sampling::{Purpose, RandomStream, StreamKey};

/// Octaves `2^0 .. 2^6`.
pub const ENCODING_OCTAVES: usize = 7;
pub const ENCODING_DIM: usize = 6 * ENCODING_OCTAVES;
/// Lower bound applied to roughness after the sigmoid remap.
pub const ROUGHNESS_FLOOR: f64 = 0.02;
/// Below this `(n·ωi)(n·ωo)` the specular lobe is dropped.
const SPECULAR_GUARD: f64 = 1e-9;

/// `[sin(2^j x), cos(2^j x)]` per octave, each a coordinate triple.
pub fn pos_encode(x: &Vec3) -> [f64; ENCODING_DIM] {
    let mut out = [0.0; ENCODING_DIM];
    for j in 0..ENCODING_OCTAVES {
        let f = (1u32 << j) as f64;
        for d in 0..3 {
            let (s, c) = (f * x[d]).sin_cos();
            out[6 * j + d] = s;
            out[6 * j + 3 + d] = c;
        }
    }
    out
}

/// Schlick: `κ + (1−κ)(1−cosθ)^5`.
pub fn fresnel<R: Real>(cos: f64, kappa: R) -> R {
    let w = (1.0 - cos).powi(5);
    kappa * (1.0 - w) + w
}

/// Trowbridge-Reitz normal distribution `D(cosθ; α)`.
pub fn ggx_distribution(cos: f64, alpha: f64) -> f64 {
    let a2 = alpha * alpha;
    let d = 1.0 + (a2 - 1.0) * cos * cos;
    a2 / (PI * d * d)
}

fn ggx_distribution_r<R: Real>(cos: f64, alpha: R) -> R {
    let a2 = alpha * alpha;
    let d = a2 * (cos * cos) + (1.0 - cos * cos);
    a2 / (d * d * PI)
}

/// `k(α) = (α+1)²/8`.
pub fn smith_k<R: Real>(alpha: R) -> R {
    let a1 = alpha + 1.0;
    a1 * a1 / 8.0
}

/// Schlick-Smith single-direction term `g(cosθ; α)`.
pub fn smith_g<R: Real>(cos: f64, alpha: R) -> R {
    let k = smith_k(alpha);
    R::cst(cos) / (k * (1.0 - cos) + cos)
}

/// `ρ/π`.
pub fn lambertian_brdf(albedo: [f64; 3]) -> [f64; 3] {
    albedo.map(|r| r / PI)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BrdfKind {
    Lambertian,
    Ggx,
}

/// Albedo ρ, roughness α, normal-incidence reflectance κ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BrdfParams<R> {
    pub albedo: [R; 3],
    pub roughness: R,
    pub specular: R,
}

impl BrdfParams<f64> {
    pub fn new(albedo: [f64; 3], roughness: f64, specular: f64) -> Self {
        BrdfParams {
            albedo,
            roughness,
            specular,
        }
    }

    pub fn lift<R: Real>(&self) -> BrdfParams<R> {
        BrdfParams {
            albedo: self.albedo.map(R::cst),
            roughness: R::cst(self.roughness),
            specular: R::cst(self.specular),
        }
    }
}

impl<R: Real> BrdfParams<R> {
    pub fn values(&self) -> BrdfParams<f64> {
        BrdfParams {
            albedo: self.albedo.map(|a| a.val()),
            roughness: self.roughness.val(),
            specular: self.specular.val(),
        }
    }
}

/// Full reflectance `f(ωi, ωo)`: attenuated diffuse plus the GGX lobe.
/// Zero when either direction is below the surface.
pub fn eval_brdf<R: Real>(p: &BrdfParams<R>, n: &Vec3, wi: &Vec3, wo: &Vec3) -> [R; 3] {
    let ci = n.dot(wi);
    let co = n.dot(wo);
    let zero = [R::cst(0.0); 3];
    if ci <= 0.0 || co <= 0.0 {
        return zero;
    }
    let sum = wi + wo;
    let len = sum.norm();
    let (nh, hi) = if len > 1e-12 {
        let h = sum / len;
        (n.dot(&h), h.dot(wi).clamp(0.0, 1.0))
    } else {
        (0.0, 0.0)
    };
    let f_h = fresnel(hi, p.specular);
    let diffuse_w = (-fresnel(ci, p.specular) + 1.0) * (-f_h + 1.0) * (ci / PI);
    let spec = if len > 1e-12 && ci * co >= SPECULAR_GUARD {
        let alpha = p.roughness;
        Some(ggx_distribution_r(nh, alpha) * f_h * smith_g(co, alpha) * smith_g(ci, alpha) / (4.0 * ci * co))
    } else {
        None
    };
    p.albedo.map(|rho| {
        let d = rho * diffuse_w;
        match spec {
            Some(s) => d + s,
            None => d,
        }
    })
}

/// Affine remap of the network's sigmoid outputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Remap {
    pub albedo_scale: f64,
    pub roughness: (f64, f64),
    pub specular: (f64, f64),
}

impl Default for Remap {
    fn default() -> Self {
        Remap {
            albedo_scale: 1.0,
            roughness: (0.0, 1.0),
            specular: (0.0, 1.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    weights: ParamId,
    biases: ParamId,
}

/// Coordinate MLP: encoded position → `hidden_layers` ReLU layers → 5
/// sigmoid outputs `(ρ_r, ρ_g, ρ_b, α, κ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialField {
    layers: Vec<Layer>,
    bounds: (Vec3, Vec3),
    pub remap: Remap,
}

impl MaterialField {
    /// Registers weights in `store`. Hidden layers use `U(±1/√fan_in)`;
    /// the output layer starts at exactly zero so every output is 0.5.
    pub fn allocate(
        store: &mut ParameterStore,
        hidden_layers: usize,
        width: usize,
        bounds: (Vec3, Vec3),
        seed: u64,
    ) -> Self {
        let mut rs = RandomStream::new(StreamKey::new(seed, Purpose::Init).pass(0x6d6c70));
        let mut layers = Vec::new();
        let mut fan_in = ENCODING_DIM;
        for l in 0..=hidden_layers {
            let outputs = if l == hidden_layers { 5 } else { width };
            let weights = store.allocate(format!("material.w{l}"), ParamGroup::Material, fan_in * outputs, 0.0);
            let biases = store.allocate(format!("material.b{l}"), ParamGroup::Material, outputs, 0.0);
            if l < hidden_layers {
                let scale = 1.0 / (fan_in as f64).sqrt();
                let wv = &mut store.values_mut()[weights as usize..weights as usize + fan_in * outputs];
                for w in wv {
                    *w = rs.range(-scale, scale);
                }
            }
            layers.push(Layer {
                inputs: fan_in,
                outputs,
                weights,
                biases,
            });
            fan_in = outputs;
        }
        MaterialField {
            layers,
            bounds,
            remap: Remap::default(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.outputs * (l.inputs + 1)).sum()
    }

    /// `(inputs, outputs)` per layer.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.inputs, l.outputs)).collect()
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        self.bounds
    }

    /// Position mapped into `[−1, 1]³` over the object bounds.
    pub fn normalize(&self, x: &Vec3) -> Vec3 {
        let (lo, hi) = self.bounds;
        Vec3::from_fn(|d, _| {
            let ext = hi[d] - lo[d];
            if ext > 0.0 {
                2.0 * (x[d] - lo[d]) / ext - 1.0
            } else {
                0.0
            }
        })
    }

    /// Sigmoid outputs before remapping.
    pub fn raw<C: ParamCtx>(&self, ctx: &C, x: &Vec3) -> [C::R; 5] {
        let enc = pos_encode(&self.normalize(x));
        let mut act: Vec<C::R> = enc.iter().map(|&v| C::R::cst(v)).collect();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            act = (0..layer.outputs)
                .map(|r| {
                    let z = ctx.neuron(
                        layer.biases + r as ParamId,
                        layer.weights + (r * layer.inputs) as ParamId,
                        &act,
                    );
                    if li == last {
                        z.sigmoid()
                    } else {
                        z.relu()
                    }
                })
                .collect();
        }
        [act[0], act[1], act[2], act[3], act[4]]
    }

    pub fn query<C: ParamCtx>(&self, ctx: &C, x: &Vec3) -> BrdfParams<C::R> {
        let [r, g, b, a, k] = self.raw(ctx, x);
        let m = &self.remap;
        let lerp = |s: C::R, (lo, hi): (f64, f64)| s * (hi - lo) + lo;
        BrdfParams {
            albedo: [r, g, b].map(|c| c * m.albedo_scale),
            roughness: lerp(a, m.roughness).max_const(ROUGHNESS_FLOOR),
            specular: lerp(k, m.specular),
        }
    }
}

/// Where BRDF parameters come from.
#[derive(Clone, Debug, PartialEq)]
pub enum MaterialModel {
    Uniform {
        kind: BrdfKind,
        params: BrdfParams<f64>,
    },
    /// Procedural 3D checker alternating two parameter sets.
    Checker {
        kind: BrdfKind,
        a: BrdfParams<f64>,
        b: BrdfParams<f64>,
        cells: f64,
    },
    Field {
        kind: BrdfKind,
        field: MaterialField,
    },
}

/// BRDF parameters resolved at one surface point.
#[derive(Clone, Copy, Debug)]
pub struct Shading<R> {
    pub kind: BrdfKind,
    pub params: BrdfParams<R>,
}

impl<R: Real> Shading<R> {
    pub fn eval(&self, n: &Vec3, wi: &Vec3, wo: &Vec3) -> [R; 3] {
        match self.kind {
            BrdfKind::Ggx => eval_brdf(&self.params, n, wi, wo),
            BrdfKind::Lambertian => {
                if n.dot(wi) <= 0.0 || n.dot(wo) <= 0.0 {
                    [R::cst(0.0); 3]
                } else {
                    self.params.albedo.map(|a| a / PI)
                }
            }
        }
    }

    /// Roughness driving the material sampler; a Lambertian surface uses
    /// α = 1, whose half-vector density is uniform.
    pub fn sampling_roughness(&self) -> f64 {
        match self.kind {
            BrdfKind::Ggx => self.params.roughness.val().max(ROUGHNESS_FLOOR),
            BrdfKind::Lambertian => 1.0,
        }
    }
}

impl MaterialModel {
    pub fn lambertian(albedo: [f64; 3]) -> Self {
        MaterialModel::Uniform {
            kind: BrdfKind::Lambertian,
            params: BrdfParams::new(albedo, 1.0, 0.0),
        }
    }

    pub fn kind(&self) -> BrdfKind {
        match self {
            MaterialModel::Uniform { kind, .. }
            | MaterialModel::Checker { kind, .. }
            | MaterialModel::Field { kind, .. } => *kind,
        }
    }

    pub fn shading<C: ParamCtx>(&self, ctx: &C, x: &Vec3) -> Shading<C::R> {
        let params = match self {
            MaterialModel::Uniform { params, .. } => params.lift(),
            MaterialModel::Checker { a, b, cells, .. } => {
                let parity: i64 = (0..3).map(|d| (x[d] * cells).floor() as i64).sum();
                if parity.rem_euclid(2) == 0 {
                    a.lift()
                } else {
                    b.lift()
                }
            }
            MaterialModel::Field { field, .. } => field.query(ctx, x),
        };
        Shading {
            kind: self.kind(),
            params,
        }
    }

    /// Parameters as plain numbers, e.g. for the albedo image.
    pub fn params_at(&self, values: &[f64], x: &Vec3) -> BrdfParams<f64> {
        self.shading(&crate::autodiff::PlainCtx::new(values), x).params
    }

    /// Copy with albedo/roughness/specular remapped (fixed models are
    /// adjusted directly, fields through their output remap).
    pub fn remapped(&self, remap: &Remap) -> Self {
        let fix = |p: &BrdfParams<f64>| {
            let lerp = |s: f64, (lo, hi): (f64, f64)| lo + (hi - lo) * s;
            BrdfParams {
                albedo: p.albedo.map(|a| a * remap.albedo_scale),
                roughness: lerp(p.roughness, remap.roughness).max(ROUGHNESS_FLOOR),
                specular: lerp(p.specular, remap.specular),
            }
        };
        match self {
            MaterialModel::Uniform { kind, params } => MaterialModel::Uniform {
                kind: *kind,
                params: fix(params),
            },
            MaterialModel::Checker { kind, a, b, cells } => MaterialModel::Checker {
                kind: *kind,
                a: fix(a),
                b: fix(b),
                cells: *cells,
            },
            MaterialModel::Field { kind, field } => {
                let mut field = field.clone();
                let r = &field.remap;
                let compose = |(lo, hi): (f64, f64), (a, b): (f64, f64)| (a + (b - a) * lo, a + (b - a) * hi);
                field.remap = Remap {
                    albedo_scale: r.albedo_scale * remap.albedo_scale,
                    roughness: compose(r.roughness, remap.roughness),
                    specular: compose(r.specular, remap.specular),
                };
                MaterialModel::Field { kind: *kind, field }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{PlainCtx, Tape, TapeCtx};

    #[test]
    fn encoding_examples() {
        let e = pos_encode(&Vec3::zeros());
        assert_eq!(e.len(), 42);
        for j in 0..ENCODING_OCTAVES {
            assert_eq!(&e[6 * j..6 * j + 3], &[0.0; 3]);
            assert_eq!(&e[6 * j + 3..6 * j + 6], &[1.0; 3]);
        }
        let e = pos_encode(&Vec3::new(PI / 2.0, 0.0, 0.0));
        assert_eq!(e[0], 1.0);
    }

    #[test]
    fn formula_spot_values() {
        assert_eq!(fresnel(1.0, 0.37), 0.37);
        assert!((ggx_distribution(1.0, 1.0) - 1.0 / PI).abs() < 1e-15);
        assert_eq!(smith_g(1.0, 0.3), 1.0);
        assert_eq!(smith_k(1.0), 0.5);
        assert_eq!(lambertian_brdf([PI; 3]), [1.0; 3]);
        assert_eq!(lambertian_brdf([0.0; 3]), [0.0; 3]);
    }

    #[test]
    fn zero_output_layer_gives_half() {
        let mut store = ParameterStore::new();
        let f = MaterialField::allocate(&mut store, 4, 16, (Vec3::repeat(-1.0), Vec3::repeat(1.0)), 3);
        let raw = f.raw(&PlainCtx::new(store.values()), &Vec3::new(0.3, -0.2, 0.9));
        assert_eq!(raw, [0.5; 5]);
        assert_eq!(f.parameter_count(), store.len());
    }

    #[test]
    fn field_gradient_matches_finite_differences() {
        let mut store = ParameterStore::new();
        let f = MaterialField::allocate(&mut store, 3, 8, (Vec3::repeat(-1.0), Vec3::repeat(1.0)), 5);
        let mut rs = RandomStream::new(StreamKey::new(8, Purpose::Test));
        for v in store.values_mut() {
            *v += rs.range(-0.4, 0.4);
        }
        let x = Vec3::new(0.1, 0.5, -0.7);
        let tape = Tape::new();
        let out = f.raw(&TapeCtx::new(&tape, store.values()), &x)[3];
        let mut grad = store.zero_gradient();
        tape.backward_into(out, 1.0, &mut grad);
        let h = 1e-6;
        for id in [0usize, 17, 200, store.len() - 3] {
            let mut v = store.values().to_vec();
            v[id] += h;
            let up = f.raw(&PlainCtx::new(&v), &x)[3];
            v[id] -= 2.0 * h;
            let dn = f.raw(&PlainCtx::new(&v), &x)[3];
            let fd = (up - dn) / (2.0 * h);
            assert!((fd - grad[id]).abs() <= 1e-6 * fd.abs().max(1e-3), "{id}: {fd} vs {}", grad[id]);
        }
    }

    #[test]
    fn brdf_is_zero_below_horizon() {
        let p = BrdfParams::new([0.8; 3], 0.3, 0.04);
        let n = Vec3::z();
        let wo = Vec3::new(0.2, 0.1, 1.0).normalize();
        let wi = Vec3::new(0.5, 0.0, -0.2).normalize();
        assert_eq!(eval_brdf(&p, &n, &wi, &wo), [0.0; 3]);
    }
}
