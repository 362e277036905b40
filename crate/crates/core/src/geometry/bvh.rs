//! Axis-aligned bounding volume hierarchy with median splits.

use super::{Ray, Vec3};

const LEAF_SIZE: usize = 4;

#[derive(Clone, Copy, Debug)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn merge(&mut self, o: &Aabb) {
        self.min = self.min.inf(&o.min);
        self.max = self.max.sup(&o.max);
    }

    /// Entry distance if the slab test passes within `(0, t_max)`.
    fn hit(&self, origin: &Vec3, inv_dir: &Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for a in 0..3 {
            let mut near = (self.min[a] - origin[a]) * inv_dir[a];
            let mut far = (self.max[a] - origin[a]) * inv_dir[a];
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            // NaN from 0·∞ keeps the current bounds.
            if near > t0 {
                t0 = near;
            }
            if far < t1 {
                t1 = far;
            }
            if t0 > t1 * (1.0 + 4.0 * f64::EPSILON) {
                return None;
            }
        }
        Some(t0)
    }
}

#[derive(Clone, Copy, Debug)]
struct Node {
    bounds: Aabb,
    /// Interior: index of the right child (left is `self + 1`).
    /// Leaf: first entry into `order`.
    offset: u32,
    /// Zero for interior nodes.
    count: u32,
}

#[derive(Clone, Debug, Default)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
}

impl Bvh {
    /// Builds over per-triangle vertex triples.
    pub fn build(triangles: &[[Vec3; 3]]) -> Self {
        let mut items: Vec<(u32, Aabb, Vec3)> = triangles
            .iter()
            .enumerate()
            .map(|(i, tri)| {
                let mut b = Aabb::empty();
                tri.iter().for_each(|p| b.grow(p));
                (i as u32, b, (tri[0] + tri[1] + tri[2]) / 3.0)
            })
            .collect();
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * triangles.len() / LEAF_SIZE + 1),
            order: Vec::with_capacity(triangles.len()),
        };
        if !items.is_empty() {
            bvh.build_node(&mut items);
        }
        bvh
    }

    fn build_node(&mut self, items: &mut [(u32, Aabb, Vec3)]) -> usize {
        let mut bounds = Aabb::empty();
        let mut centroids = Aabb::empty();
        for (_, b, c) in items.iter() {
            bounds.merge(b);
            centroids.grow(c);
        }
        let idx = self.nodes.len();
        self.nodes.push(Node {
            bounds,
            offset: 0,
            count: 0,
        });
        let extent = centroids.max - centroids.min;
        if items.len() <= LEAF_SIZE || extent.max() <= 0.0 {
            self.nodes[idx].offset = self.order.len() as u32;
            self.nodes[idx].count = items.len() as u32;
            self.order.extend(items.iter().map(|t| t.0));
            return idx;
        }
        let axis = extent.imax();
        let mid = items.len() / 2;
        items.select_nth_unstable_by(mid, |a, b| a.2[axis].total_cmp(&b.2[axis]));
        let (left, right) = items.split_at_mut(mid);
        self.build_node(left);
        let r = self.build_node(right);
        self.nodes[idx].offset = r as u32;
        idx
    }

    /// Visits candidate triangles front-to-back-ish; `visit` returns the new
    /// `t_max` (or `None` to stop).
    pub fn traverse(&self, ray: &Ray, mut t_max: f64, mut visit: impl FnMut(u32, f64) -> Option<f64>) {
        if self.nodes.is_empty() {
            return;
        }
        let inv = Vec3::new(1.0 / ray.direction.x, 1.0 / ray.direction.y, 1.0 / ray.direction.z);
        let mut stack = [0u32; 64];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let node = self.nodes[stack[sp] as usize];
            if node.bounds.hit(&ray.origin, &inv, t_max).is_none() {
                continue;
            }
            if node.count > 0 {
                for &tri in &self.order[node.offset as usize..(node.offset + node.count) as usize] {
                    match visit(tri, t_max) {
                        Some(t) => t_max = t,
                        None => return,
                    }
                }
            } else {
                let left = stack[sp] + 1;
                stack[sp] = node.offset;
                stack[sp + 1] = left;
                sp += 2;
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}
