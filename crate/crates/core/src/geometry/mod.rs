//! Object surfaces, ray queries, and the occluder-shell intersection.

mod bvh;
mod mesh;

pub use bvh::Bvh;
pub use mesh::{parse_obj, TriangleMesh};

use nalgebra::Vector3;

pub type Vec3 = Vector3<f64>;

/// Minimum hit distance along a ray, in scene units.
pub const RAY_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("point at radius {radius} is not inside the shell of radius {shell}")]
    OutsideShell { radius: f64, shell: f64 },
    #[error("OBJ line {line}: {reason}")]
    Obj { line: usize, reason: String },
    #[error("mesh has no triangles")]
    EmptyMesh,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    /// Normalizes `direction`.
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        Ray {
            origin,
            direction: direction.normalize(),
        }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + t * self.direction
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceHit {
    pub t: f64,
    pub position: Vec3,
    pub normal: Vec3,
    pub primitive: u32,
    /// Mesh hits only.
    pub barycentric: Option<[f64; 3]>,
}

/// Orthonormal basis with `normal` as local +z.
#[derive(Clone, Copy, Debug)]
pub struct Frame {
    pub tangent: Vec3,
    pub bitangent: Vec3,
    pub normal: Vec3,
}

impl Frame {
    pub fn from_normal(n: &Vec3) -> Self {
        // Duff et al. 2017, branchless ONB.
        let sign = 1.0f64.copysign(n.z);
        let a = -1.0 / (sign + n.z);
        let b = n.x * n.y * a;
        Frame {
            tangent: Vec3::new(1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x),
            bitangent: Vec3::new(b, sign + n.y * n.y * a, -n.y),
            normal: *n,
        }
    }

    pub fn to_world(&self, v: &Vec3) -> Vec3 {
        v.x * self.tangent + v.y * self.bitangent + v.z * self.normal
    }

    pub fn to_local(&self, v: &Vec3) -> Vec3 {
        Vec3::new(v.dot(&self.tangent), v.dot(&self.bitangent), v.dot(&self.normal))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
}

impl Sphere {
    pub fn intersect(&self, ray: &Ray, t_max: f64) -> Option<SurfaceHit> {
        let oc = ray.origin - self.center;
        let b = oc.dot(&ray.direction);
        let c = oc.norm_squared() - self.radius * self.radius;
        let disc = b * b - c;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        // Stable root pair.
        let q = if b > 0.0 { -b - sq } else { -b + sq };
        let (mut t0, mut t1) = (q, if q != 0.0 { c / q } else { q });
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        let t = if t0 > RAY_EPSILON {
            t0
        } else if t1 > RAY_EPSILON {
            t1
        } else {
            return None;
        };
        if t >= t_max {
            return None;
        }
        let position = ray.at(t);
        Some(SurfaceHit {
            t,
            position,
            normal: (position - self.center).normalize(),
            primitive: 0,
            barycentric: None,
        })
    }
}

/// Known, fixed object geometry.
#[derive(Clone, Debug)]
pub enum ObjectGeometry {
    Sphere(Sphere),
    Mesh(TriangleMesh),
}

impl ObjectGeometry {
    pub fn unit_sphere() -> Self {
        ObjectGeometry::Sphere(Sphere {
            center: Vec3::zeros(),
            radius: 1.0,
        })
    }

    /// Nearest hit with `t > RAY_EPSILON`.
    pub fn intersect(&self, ray: &Ray) -> Option<SurfaceHit> {
        match self {
            ObjectGeometry::Sphere(s) => s.intersect(ray, f64::INFINITY),
            ObjectGeometry::Mesh(m) => m.intersect(ray),
        }
    }

    /// True if the ray hits the object anywhere beyond `RAY_EPSILON`.
    pub fn occluded(&self, ray: &Ray) -> bool {
        match self {
            ObjectGeometry::Sphere(s) => s.intersect(ray, f64::INFINITY).is_some(),
            ObjectGeometry::Mesh(m) => m.any_hit(ray),
        }
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        match self {
            ObjectGeometry::Sphere(s) => {
                let r = Vec3::repeat(s.radius);
                (s.center - r, s.center + r)
            }
            ObjectGeometry::Mesh(m) => m.bounds(),
        }
    }

    /// Largest distance from the origin to the object.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            ObjectGeometry::Sphere(s) => s.center.norm() + s.radius,
            ObjectGeometry::Mesh(m) => m
                .positions()
                .iter()
                .map(|p| p.norm())
                .fold(0.0, f64::max),
        }
    }

    /// Offset applied along the normal before tracing a shadow ray.
    pub fn shadow_offset(&self) -> f64 {
        1e-6 * self.bounding_radius().max(1e-3)
    }

    /// Binary self-visibility `V(x, ω)`: `true` when the shadow ray escapes.
    pub fn visible(&self, x: &Vec3, n: &Vec3, wi: &Vec3) -> bool {
        let origin = x + self.shadow_offset() * n;
        !self.occluded(&Ray {
            origin,
            direction: *wi,
        })
    }
}

/// Unit direction of the point where the ray `x + s ω` (s > 0) meets the
/// origin-centred sphere of radius `r`; requires `‖x‖ < r`.
pub fn shell_intersect(x: &Vec3, wi: &Vec3, r: f64) -> Result<Vec3, GeometryError> {
    let radius = x.norm();
    if !(radius < r) {
        return Err(GeometryError::OutsideShell { radius, shell: r });
    }
    Ok(shell_point(x, wi, r))
}

/// [`shell_intersect`] without the inside check; for `‖x‖ = r` it returns
/// the far intersection.
pub fn shell_point(x: &Vec3, wi: &Vec3, r: f64) -> Vec3 {
    let xw = x.dot(wi);
    let s = (xw * xw + r * r - x.norm_squared()).max(0.0).sqrt() - xw;
    ((x + s * wi) / r).normalize()
}

/// `(θ, φ)` with θ measured from +z and φ in `[0, 2π)`.
pub fn to_spherical(d: &Vec3) -> (f64, f64) {
    let theta = d.z.clamp(-1.0, 1.0).acos();
    let mut phi = d.y.atan2(d.x);
    if phi < 0.0 {
        phi += 2.0 * std::f64::consts::PI;
    }
    (theta, phi)
}

pub fn from_spherical(theta: f64, phi: f64) -> Vec3 {
    let st = theta.sin();
    Vec3::new(st * phi.cos(), st * phi.sin(), theta.cos())
}
