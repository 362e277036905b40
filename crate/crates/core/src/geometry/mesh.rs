use std::collections::HashMap;

use super::{Bvh, GeometryError, Ray, SurfaceHit, Vec3, RAY_EPSILON};

/// Below this many triangles queries test every triangle.
pub const BRUTE_FORCE_LIMIT: usize = 64;

/// Triangle mesh with per-vertex normals.
#[derive(Clone, Debug)]
pub struct TriangleMesh {
    positions: Vec<Vec3>,
    normals: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    bvh: Option<Bvh>,
}

impl TriangleMesh {
    /// Normals are renormalized; missing normals (`None`) are computed by
    /// area-weighted averaging of incident faces.
    pub fn new(positions: Vec<Vec3>, normals: Option<Vec<Vec3>>, faces: Vec<[u32; 3]>) -> Result<Self, GeometryError> {
        if faces.is_empty() {
            return Err(GeometryError::EmptyMesh);
        }
        let normals = match normals {
            Some(n) => n.into_iter().map(|v| v.normalize()).collect(),
            None => smooth_normals(&positions, &faces),
        };
        let mut mesh = TriangleMesh {
            positions,
            normals,
            faces,
            bvh: None,
        };
        if mesh.faces.len() >= BRUTE_FORCE_LIMIT {
            let tris: Vec<[Vec3; 3]> = (0..mesh.faces.len()).map(|i| mesh.triangle(i)).collect();
            mesh.bvh = Some(Bvh::build(&tris));
        }
        Ok(mesh)
    }

    /// Displaced UV sphere ("blob"): radius `1 + amplitude·f(ω)` with a
    /// smooth seeded `f`; `rings ≥ 3`, `segments ≥ 3`.
    pub fn blob(rings: usize, segments: usize, amplitude: f64, seed: u64) -> Self {
        use crate::sampling::{Purpose, RandomStream, StreamKey};
        let mut rs = RandomStream::new(StreamKey::new(seed, Purpose::Dataset));
        let lobes: Vec<(f64, f64, f64, f64)> = (0..4)
            .map(|_| {
                (
                    rs.range(-1.0, 1.0),
                    (1 + rs.below(3)) as f64,
                    (1 + rs.below(3)) as f64,
                    rs.range(0.0, std::f64::consts::TAU),
                )
            })
            .collect();
        let radius = |theta: f64, phi: f64| {
            let f: f64 = lobes
                .iter()
                .map(|&(w, a, b, p)| w * (a * theta).sin() * (b * phi + p).cos())
                .sum();
            1.0 + amplitude * f / lobes.len() as f64
        };
        let mut positions = vec![Vec3::new(0.0, 0.0, radius(0.0, 0.0))];
        for i in 1..rings {
            let theta = std::f64::consts::PI * i as f64 / rings as f64;
            for j in 0..segments {
                let phi = std::f64::consts::TAU * j as f64 / segments as f64;
                positions.push(radius(theta, phi) * super::from_spherical(theta, phi));
            }
        }
        positions.push(Vec3::new(0.0, 0.0, -radius(std::f64::consts::PI, 0.0)));
        let south = (positions.len() - 1) as u32;
        let ring = |i: usize, j: usize| (1 + (i - 1) * segments + j % segments) as u32;
        let mut faces = Vec::new();
        for j in 0..segments {
            faces.push([0, ring(1, j), ring(1, j + 1)]);
        }
        for i in 1..rings - 1 {
            for j in 0..segments {
                let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
                faces.push([a, c, d]);
                faces.push([a, d, b]);
            }
        }
        for j in 0..segments {
            faces.push([south, ring(rings - 1, j + 1), ring(rings - 1, j)]);
        }
        TriangleMesh::new(positions, None, faces).expect("blob has faces")
    }

    /// Wavefront OBJ text readable by [`parse_obj`].
    pub fn to_obj(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        for p in &self.positions {
            let _ = writeln!(out, "v {} {} {}", p.x, p.y, p.z);
        }
        for n in &self.normals {
            let _ = writeln!(out, "vn {} {} {}", n.x, n.y, n.z);
        }
        for f in &self.faces {
            let [a, b, c] = f.map(|i| i + 1);
            let _ = writeln!(out, "f {a}//{a} {b}//{b} {c}//{c}");
        }
        out
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn has_bvh(&self) -> bool {
        self.bvh.is_some()
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        let f = self.faces[i];
        [
            self.positions[f[0] as usize],
            self.positions[f[1] as usize],
            self.positions[f[2] as usize],
        ]
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in &self.positions {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    fn hit_record(&self, ray: &Ray, tri: u32, t: f64, b1: f64, b2: f64) -> SurfaceHit {
        let f = self.faces[tri as usize];
        let b0 = 1.0 - b1 - b2;
        let [p0, p1, p2] = self.triangle(tri as usize);
        let normal = (b0 * self.normals[f[0] as usize]
            + b1 * self.normals[f[1] as usize]
            + b2 * self.normals[f[2] as usize])
            .normalize();
        let _ = ray;
        SurfaceHit {
            t,
            position: b0 * p0 + b1 * p1 + b2 * p2,
            normal,
            primitive: tri,
            barycentric: Some([b0, b1, b2]),
        }
    }

    pub fn intersect(&self, ray: &Ray) -> Option<SurfaceHit> {
        match &self.bvh {
            None => self.intersect_brute_force(ray),
            Some(bvh) => {
                let mut best: Option<(u32, f64, f64, f64)> = None;
                bvh.traverse(ray, f64::INFINITY, |tri, t_max| {
                    if let Some((t, b1, b2)) = intersect_triangle(ray, &self.triangle(tri as usize)) {
                        if t < t_max {
                            best = Some((tri, t, b1, b2));
                            return Some(t);
                        }
                    }
                    Some(t_max)
                });
                best.map(|(tri, t, b1, b2)| self.hit_record(ray, tri, t, b1, b2))
            }
        }
    }

    /// Reference query testing every triangle.
    pub fn intersect_brute_force(&self, ray: &Ray) -> Option<SurfaceHit> {
        let mut best: Option<(u32, f64, f64, f64)> = None;
        for i in 0..self.faces.len() {
            if let Some((t, b1, b2)) = intersect_triangle(ray, &self.triangle(i)) {
                if best.is_none_or(|b| t < b.1) {
                    best = Some((i as u32, t, b1, b2));
                }
            }
        }
        best.map(|(tri, t, b1, b2)| self.hit_record(ray, tri, t, b1, b2))
    }

    pub fn any_hit(&self, ray: &Ray) -> bool {
        match &self.bvh {
            None => (0..self.faces.len()).any(|i| intersect_triangle(ray, &self.triangle(i)).is_some()),
            Some(bvh) => {
                let mut hit = false;
                bvh.traverse(ray, f64::INFINITY, |tri, t_max| {
                    if intersect_triangle(ray, &self.triangle(tri as usize)).is_some() {
                        hit = true;
                        None
                    } else {
                        Some(t_max)
                    }
                });
                hit
            }
        }
    }
}

/// Möller–Trumbore; returns `(t, b1, b2)` for `t > RAY_EPSILON`.
pub fn intersect_triangle(ray: &Ray, tri: &[Vec3; 3]) -> Option<(f64, f64, f64)> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = ray.direction.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = ray.origin - tri[0];
    let b1 = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&b1) {
        return None;
    }
    let q = s.cross(&e1);
    let b2 = ray.direction.dot(&q) * inv;
    if b2 < 0.0 || b1 + b2 > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > RAY_EPSILON).then_some((t, b1, b2))
}

fn smooth_normals(positions: &[Vec3], faces: &[[u32; 3]]) -> Vec<Vec3> {
    let mut acc = vec![Vec3::zeros(); positions.len()];
    for f in faces {
        let [a, b, c] = f.map(|i| positions[i as usize]);
        // Cross product length is twice the area: area weighting for free.
        let n = (b - a).cross(&(c - a));
        for &i in f {
            acc[i as usize] += n;
        }
    }
    acc.into_iter()
        .map(|n| {
            let len = n.norm();
            if len > 0.0 {
                n / len
            } else {
                Vec3::z()
            }
        })
        .collect()
}

fn parse_index(tok: &str, count: usize, line: usize) -> Result<usize, GeometryError> {
    let err = |reason: String| GeometryError::Obj { line, reason };
    let i: i64 = tok.parse().map_err(|_| err(format!("bad index {tok:?}")))?;
    let idx = if i < 0 { count as i64 + i } else { i - 1 };
    if idx < 0 || idx as usize >= count {
        return Err(err(format!("index {i} out of range")));
    }
    Ok(idx as usize)
}

/// Parses the `v` / `vn` / `f` subset of Wavefront OBJ. Faces may be
/// `p//n`, `p/t/n` or bare `p`; polygons are fan-triangulated.
pub fn parse_obj(text: &str) -> Result<TriangleMesh, GeometryError> {
    let mut pos = Vec::new();
    let mut nrm = Vec::new();
    let mut corners: Vec<Vec<(usize, Option<usize>)>> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        let mut toks = body.split_whitespace();
        let Some(tag) = toks.next() else { continue };
        let floats = |toks: std::str::SplitWhitespace<'_>| -> Result<Vec3, GeometryError> {
            let v: Result<Vec<f64>, _> = toks.take(3).map(str::parse).collect();
            match v {
                Ok(v) if v.len() == 3 => Ok(Vec3::new(v[0], v[1], v[2])),
                _ => Err(GeometryError::Obj {
                    line,
                    reason: "expected three numbers".into(),
                }),
            }
        };
        match tag {
            "v" => pos.push(floats(toks)?),
            "vn" => nrm.push(floats(toks)?),
            "f" => {
                let mut face = Vec::new();
                for t in toks {
                    let mut parts = t.split('/');
                    let p = parse_index(parts.next().unwrap_or(""), pos.len(), line)?;
                    let n = match parts.nth(1) {
                        Some(s) if !s.is_empty() => Some(parse_index(s, nrm.len(), line)?),
                        _ => None,
                    };
                    face.push((p, n));
                }
                if face.len() < 3 {
                    return Err(GeometryError::Obj {
                        line,
                        reason: "face needs at least three vertices".into(),
                    });
                }
                corners.push(face);
            }
            _ => {}
        }
    }
    let with_normals = corners.iter().flatten().all(|c| c.1.is_some());
    let mut remap: HashMap<(usize, Option<usize>), u32> = HashMap::new();
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut faces = Vec::new();
    for face in &corners {
        let ids: Vec<u32> = face
            .iter()
            .map(|&(p, n)| {
                let key = if with_normals { (p, n) } else { (p, None) };
                *remap.entry(key).or_insert_with(|| {
                    positions.push(pos[p]);
                    if let Some(n) = key.1 {
                        normals.push(nrm[n]);
                    }
                    (positions.len() - 1) as u32
                })
            })
            .collect();
        for k in 1..ids.len() - 1 {
            faces.push([ids[0], ids[k], ids[k + 1]]);
        }
    }
    TriangleMesh::new(positions, with_normals.then_some(normals), faces)
}
