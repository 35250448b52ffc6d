//! Triangle meshes and the point-cloud builders used by the procedural
//! asset families.

use std::f64::consts::TAU;

use glam::{DQuat, DVec3};

use super::Aabb;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub positions: Vec<DVec3>,
    pub triangles: Vec<[u32; 3]>,
    /// Material slot of each triangle.
    pub parts: Vec<u8>,
}

impl TriMesh {
    /// Closed convex mesh over the hull of `points`.
    pub fn convex(points: &[DVec3], part: u8) -> TriMesh {
        let (positions, triangles) = parry3d_f64::transformation::convex_hull(points);
        let parts = vec![part; triangles.len()];
        TriMesh {
            positions,
            triangles,
            parts,
        }
    }

    pub fn append(&mut self, other: &TriMesh) {
        let base = self.positions.len() as u32;
        self.positions.extend_from_slice(&other.positions);
        self.triangles
            .extend(other.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
        self.parts.extend_from_slice(&other.parts);
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(&self.positions)
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn triangle(&self, i: usize) -> [DVec3; 3] {
        let [a, b, c] = self.triangles[i];
        [
            self.positions[a as usize],
            self.positions[b as usize],
            self.positions[c as usize],
        ]
    }

    /// Centers the AABB on the origin and scales its largest extent to 1.
    pub fn normalized(mut self) -> TriMesh {
        let b = self.aabb();
        let c = b.center();
        let s = 1.0 / b.extent().max_element();
        for p in &mut self.positions {
            *p = (*p - c) * s;
        }
        self
    }

    pub fn transformed(mut self, rotation: DQuat, scale: DVec3, translation: DVec3) -> TriMesh {
        for p in &mut self.positions {
            *p = rotation * (*p * scale) + translation;
        }
        self
    }

    /// Parametric torus around the z axis.
    pub fn torus(major: f64, minor: f64, segments: usize, sides: usize, part: u8) -> TriMesh {
        let mut positions = Vec::with_capacity(segments * sides);
        for i in 0..segments {
            let u = TAU * i as f64 / segments as f64;
            for j in 0..sides {
                let v = TAU * j as f64 / sides as f64;
                let r = major + minor * v.cos();
                positions.push(DVec3::new(r * u.cos(), r * u.sin(), minor * v.sin()));
            }
        }
        let idx = |i: usize, j: usize| ((i % segments) * sides + (j % sides)) as u32;
        let mut triangles = Vec::with_capacity(segments * sides * 2);
        for i in 0..segments {
            for j in 0..sides {
                let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        let parts = vec![part; triangles.len()];
        TriMesh {
            positions,
            triangles,
            parts,
        }
    }
}

/// Points on an axis-aligned ellipse in the plane `z`.
pub fn ring_points(rx: f64, ry: f64, z: f64, segments: usize) -> Vec<DVec3> {
    (0..segments)
        .map(|i| {
            let a = TAU * i as f64 / segments as f64;
            DVec3::new(rx * a.cos(), ry * a.sin(), z)
        })
        .collect()
}

/// Points on an ellipsoid (or one cap of it, via `z_range` in `[-1, 1]`).
pub fn ellipsoid_points(radii: DVec3, segments: usize, rings: usize, z_range: [f64; 2]) -> Vec<DVec3> {
    let mut pts = Vec::new();
    let (lo, hi) = (z_range[0].asin(), z_range[1].asin());
    for r in 0..=rings {
        let phi = lo + (hi - lo) * r as f64 / rings as f64;
        let (s, c) = phi.sin_cos();
        if c.abs() < 1e-9 {
            pts.push(DVec3::new(0.0, 0.0, radii.z * s));
            continue;
        }
        pts.extend(ring_points(radii.x * c, radii.y * c, radii.z * s, segments));
    }
    pts
}

/// Frustum between two circular rings (a cylinder when the radii match, a
/// cone when one radius is zero).
pub fn frustum_points(r_bottom: f64, r_top: f64, z0: f64, z1: f64, segments: usize) -> Vec<DVec3> {
    let mut pts = Vec::new();
    for (r, z) in [(r_bottom, z0), (r_top, z1)] {
        if r <= 1e-9 {
            pts.push(DVec3::new(0.0, 0.0, z));
        } else {
            pts.extend(ring_points(r, r, z, segments));
        }
    }
    pts
}

/// Box corners, optionally chamfered by `bevel` (fraction of the smallest half extent).
pub fn box_points(half: DVec3, bevel: f64) -> Vec<DVec3> {
    let b = bevel * half.min_element();
    let mut pts = Vec::new();
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                let s = DVec3::new(sx, sy, sz);
                if b <= 0.0 {
                    pts.push(half * s);
                } else {
                    pts.push(s * DVec3::new(half.x - b, half.y - b, half.z));
                    pts.push(s * DVec3::new(half.x - b, half.y, half.z - b));
                    pts.push(s * DVec3::new(half.x, half.y - b, half.z - b));
                }
            }
        }
    }
    pts
}

/// Capsule along z with total length `2 * (half_len + radius)`.
pub fn capsule_points(radius: f64, half_len: f64, segments: usize, rings: usize) -> Vec<DVec3> {
    let cap = |sign: f64| {
        ellipsoid_points(
            DVec3::splat(radius),
            segments,
            rings,
            if sign > 0.0 { [0.0, 1.0] } else { [-1.0, 0.0] },
        )
        .into_iter()
        .map(move |p| p + DVec3::new(0.0, 0.0, sign * half_len))
    };
    cap(1.0).chain(cap(-1.0)).collect()
}
