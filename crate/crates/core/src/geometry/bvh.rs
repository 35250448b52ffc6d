//! Binned-SAH bounding volume hierarchy.
//!
//! One generic tree serves both levels of the renderer: triangles inside a
//! template mesh, and placed instances inside a scene.

use glam::DVec3;

use super::{Aabb, Ray, TriMesh};

const BINS: usize = 12;
const STACK: usize = 64;

#[derive(Debug, Clone, Copy)]
struct Node {
    aabb: Aabb,
    /// Leaf: first index into `order`. Interior: index of the left child; the
    /// right child follows it.
    first: u32,
    /// Number of primitives for a leaf, 0 for interior nodes.
    count: u32,
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    /// Primitive indices in leaf order.
    order: Vec<u32>,
}

struct Builder<'a> {
    boxes: &'a [Aabb],
    centers: Vec<DVec3>,
    nodes: Vec<Node>,
    order: Vec<u32>,
    max_leaf: usize,
}

impl Bvh {
    pub fn build(boxes: &[Aabb], max_leaf: usize) -> Bvh {
        let mut b = Builder {
            boxes,
            centers: boxes.iter().map(Aabb::center).collect(),
            nodes: Vec::with_capacity(boxes.len().max(1) * 2),
            order: (0..boxes.len() as u32).collect(),
            max_leaf: max_leaf.max(1),
        };
        b.nodes.push(Node {
            aabb: Aabb::EMPTY,
            first: 0,
            count: 0,
        });
        if !boxes.is_empty() {
            b.split(0, 0, boxes.len());
        }
        Bvh {
            nodes: b.nodes,
            order: b.order,
        }
    }

    pub fn order(&self) -> &[u32] {
        &self.order
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes[0].aabb
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Nearest hit. `hit(prim, t_max)` must return a hit strictly closer
    /// than `t_max`, or `None`.
    pub fn closest<H>(
        &self,
        ray: &Ray,
        mut t_max: f64,
        mut hit: impl FnMut(u32, f64) -> Option<(f64, H)>,
    ) -> Option<(f64, H)> {
        if self.order.is_empty() {
            return None;
        }
        let mut best = None;
        let mut stack = [0u32; STACK];
        let mut sp = 0;
        self.nodes[0].aabb.hit(ray, t_max)?;
        let mut node = 0usize;
        loop {
            let n = &self.nodes[node];
            if n.count > 0 {
                for &prim in &self.order[n.first as usize..(n.first + n.count) as usize] {
                    if let Some((t, h)) = hit(prim, t_max) {
                        t_max = t;
                        best = Some((t, h));
                    }
                }
            } else {
                let (l, r) = (n.first as usize, n.first as usize + 1);
                let tl = self.nodes[l].aabb.hit(ray, t_max);
                let tr = self.nodes[r].aabb.hit(ray, t_max);
                match (tl, tr) {
                    (Some(a), Some(b)) => {
                        let (near, far) = if a <= b { (l, r) } else { (r, l) };
                        stack[sp] = far as u32;
                        sp += 1;
                        node = near;
                        continue;
                    }
                    (Some(_), None) => {
                        node = l;
                        continue;
                    }
                    (None, Some(_)) => {
                        node = r;
                        continue;
                    }
                    (None, None) => {}
                }
            }
            // Pop, skipping nodes that are now beyond the current best.
            loop {
                if sp == 0 {
                    return best;
                }
                sp -= 1;
                let cand = stack[sp] as usize;
                if self.nodes[cand].aabb.hit(ray, t_max).is_some() {
                    node = cand;
                    break;
                }
            }
        }
    }

    /// True as soon as any primitive reports a hit within `t_max`.
    pub fn any(&self, ray: &Ray, t_max: f64, mut hit: impl FnMut(u32, f64) -> bool) -> bool {
        if self.order.is_empty() {
            return false;
        }
        let mut stack = [0u32; STACK];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let n = &self.nodes[stack[sp] as usize];
            if n.aabb.hit(ray, t_max).is_none() {
                continue;
            }
            if n.count > 0 {
                for &prim in &self.order[n.first as usize..(n.first + n.count) as usize] {
                    if hit(prim, t_max) {
                        return true;
                    }
                }
            } else {
                stack[sp] = n.first;
                stack[sp + 1] = n.first + 1;
                sp += 2;
            }
        }
        false
    }

    /// Indices of every primitive whose leaf box overlaps `query`.
    pub fn query(&self, query: &Aabb, out: &mut Vec<u32>) {
        if self.order.is_empty() {
            return;
        }
        let mut stack = vec![0u32];
        while let Some(i) = stack.pop() {
            let n = &self.nodes[i as usize];
            if !n.aabb.overlaps(query) {
                continue;
            }
            if n.count > 0 {
                out.extend_from_slice(&self.order[n.first as usize..(n.first + n.count) as usize]);
            } else {
                stack.push(n.first);
                stack.push(n.first + 1);
            }
        }
    }
}

impl Builder<'_> {
    fn bounds(&self, lo: usize, hi: usize) -> (Aabb, Aabb) {
        let mut outer = Aabb::EMPTY;
        let mut centers = Aabb::EMPTY;
        for &p in &self.order[lo..hi] {
            outer = outer.union(self.boxes[p as usize]);
            centers = centers.grow(self.centers[p as usize]);
        }
        (outer, centers)
    }

    fn split(&mut self, node: usize, lo: usize, hi: usize) {
        let (outer, centers) = self.bounds(lo, hi);
        self.nodes[node].aabb = outer;
        let count = hi - lo;
        let leaf = |nodes: &mut Vec<Node>| {
            nodes[node].first = lo as u32;
            nodes[node].count = count as u32;
        };
        if count <= self.max_leaf {
            return leaf(&mut self.nodes);
        }
        let ext = centers.extent();
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let (cmin, cext) = (centers.min[axis], ext[axis]);
        let mid = if cext <= 1e-12 {
            // All centroids coincide: split the list in half.
            lo + count / 2
        } else {
            let bin_of = |c: f64| (((c - cmin) / cext * BINS as f64) as usize).min(BINS - 1);
            let mut bin_box = [Aabb::EMPTY; BINS];
            let mut bin_n = [0usize; BINS];
            for &p in &self.order[lo..hi] {
                let b = bin_of(self.centers[p as usize][axis]);
                bin_box[b] = bin_box[b].union(self.boxes[p as usize]);
                bin_n[b] += 1;
            }
            let mut right_area = [0.0; BINS];
            let mut right_n = [0usize; BINS];
            let (mut acc, mut n) = (Aabb::EMPTY, 0);
            for i in (1..BINS).rev() {
                acc = acc.union(bin_box[i]);
                n += bin_n[i];
                right_area[i] = acc.surface_area();
                right_n[i] = n;
            }
            let (mut best_cost, mut best_split) = (f64::INFINITY, 1);
            let (mut acc, mut n) = (Aabb::EMPTY, 0);
            for i in 1..BINS {
                acc = acc.union(bin_box[i - 1]);
                n += bin_n[i - 1];
                if n == 0 || right_n[i] == 0 {
                    continue;
                }
                let cost = acc.surface_area() * n as f64 + right_area[i] * right_n[i] as f64;
                if cost < best_cost {
                    best_cost = cost;
                    best_split = i;
                }
            }
            let leaf_cost = outer.surface_area() * count as f64;
            if count <= 2 * self.max_leaf && best_cost >= leaf_cost {
                return leaf(&mut self.nodes);
            }
            let slice = &mut self.order[lo..hi];
            let centers = &self.centers;
            let mut i = 0;
            for j in 0..slice.len() {
                if bin_of(centers[slice[j] as usize][axis]) < best_split {
                    slice.swap(i, j);
                    i += 1;
                }
            }
            if i == 0 || i == count {
                lo + count / 2
            } else {
                lo + i
            }
        };
        let left = self.nodes.len();
        let empty = Node {
            aabb: Aabb::EMPTY,
            first: 0,
            count: 0,
        };
        self.nodes.push(empty);
        self.nodes.push(empty);
        self.nodes[node].first = left as u32;
        self.nodes[node].count = 0;
        self.split(left, lo, mid);
        self.split(left + 1, mid, hi);
    }
}

#[derive(Debug, Clone, Copy)]
struct Tri {
    v0: DVec3,
    e1: DVec3,
    e2: DVec3,
    normal: DVec3,
    part: u8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriHit {
    pub t: f64,
    /// Unit geometric normal in the mesh frame, not yet oriented.
    pub normal: DVec3,
    pub part: u8,
}

/// A triangle mesh with its hierarchy, triangles stored in leaf order.
#[derive(Debug, Clone)]
pub struct MeshBvh {
    bvh: Bvh,
    tris: Vec<Tri>,
}

impl MeshBvh {
    pub fn new(mesh: &TriMesh) -> MeshBvh {
        let boxes: Vec<Aabb> = (0..mesh.triangles.len())
            .map(|i| Aabb::from_points(&mesh.triangle(i)))
            .collect();
        let mut bvh = Bvh::build(&boxes, 4);
        let tris = bvh
            .order
            .iter()
            .map(|&i| {
                let [a, b, c] = mesh.triangle(i as usize);
                let (e1, e2) = (b - a, c - a);
                Tri {
                    v0: a,
                    e1,
                    e2,
                    normal: e1.cross(e2).normalize_or_zero(),
                    part: mesh.parts[i as usize],
                }
            })
            .collect();
        // Triangles are now stored in leaf order.
        for (slot, o) in bvh.order.iter_mut().enumerate() {
            *o = slot as u32;
        }
        MeshBvh { bvh, tris }
    }

    pub fn bounds(&self) -> Aabb {
        self.bvh.bounds()
    }

    pub fn triangle_count(&self) -> usize {
        self.tris.len()
    }

    #[inline]
    fn hit_tri(tri: &Tri, ray: &Ray, t_max: f64) -> Option<f64> {
        let p = ray.dir.cross(tri.e2);
        let det = tri.e1.dot(p);
        if det.abs() < 1e-14 {
            return None;
        }
        let inv = 1.0 / det;
        let s = ray.origin - tri.v0;
        let u = s.dot(p) * inv;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let q = s.cross(tri.e1);
        let v = ray.dir.dot(q) * inv;
        if v < 0.0 || u + v > 1.0 {
            return None;
        }
        let t = tri.e2.dot(q) * inv;
        (t > 1e-9 && t < t_max).then_some(t)
    }

    pub fn intersect(&self, ray: &Ray, t_max: f64) -> Option<TriHit> {
        self.bvh
            .closest(ray, t_max, |i, tm| {
                let tri = &self.tris[i as usize];
                Self::hit_tri(tri, ray, tm).map(|t| (t, i))
            })
            .map(|(t, i)| {
                let tri = &self.tris[i as usize];
                TriHit {
                    t,
                    normal: tri.normal,
                    part: tri.part,
                }
            })
    }

    pub fn occluded(&self, ray: &Ray, t_max: f64) -> bool {
        self.bvh.any(ray, t_max, |i, tm| {
            Self::hit_tri(&self.tris[i as usize], ray, tm).is_some()
        })
    }
}
