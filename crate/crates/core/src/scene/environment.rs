//! Floor and container descriptions plus their collision/render geometry.

use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::catalog::ColorName;
use crate::geometry::mesh::ring_points;
use crate::geometry::{Aabb, TriMesh};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloorShape {
    Cube,
    Cylinder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloorPattern {
    Checker,
    Stripes,
    DotGrid,
    ValueNoise,
}

impl FloorPattern {
    pub const ALL: [FloorPattern; 4] = [
        FloorPattern::Checker,
        FloorPattern::Stripes,
        FloorPattern::DotGrid,
        FloorPattern::ValueNoise,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorSpec {
    pub shape: FloorShape,
    /// Half extents in x and y; a cylinder uses an elliptic cross-section.
    pub half_extents: [f64; 2],
    pub thickness: f64,
    pub pattern: FloorPattern,
    pub uv_scale: f64,
    /// World length of one pattern tile (`uv_scale * s`).
    pub tile_size: f64,
    /// Pattern rotation about z, radians.
    pub pattern_angle: f64,
    pub colors: [DVec3; 2],
    pub noise_seed: u64,
}

impl FloorSpec {
    pub(crate) fn sample(s: &mut RngStream, scale: f64, half_range: [f64; 2], uv_range: [f64; 2]) -> FloorSpec {
        let shape = if s.bernoulli(0.5) {
            FloorShape::Cube
        } else {
            FloorShape::Cylinder
        };
        let half_extents = [s.range(half_range) * scale, s.range(half_range) * scale];
        let pattern = FloorPattern::ALL[s.weighted(&[0.35, 0.25, 0.25, 0.15])];
        let uv_scale = s.range(uv_range);
        let pattern_angle = s.uniform(0.0, std::f64::consts::PI).expect("static");
        let a = ColorName::ALL[s.index(ColorName::ALL.len())].rgb();
        let mut b = ColorName::ALL[s.index(ColorName::ALL.len())].rgb();
        let contrast = s.uniform(0.25, 0.9).expect("static");
        b = a.lerp(b, contrast);
        let tone = s.uniform(0.55, 1.0).expect("static");
        FloorSpec {
            shape,
            half_extents,
            thickness: 0.05 * scale,
            pattern,
            uv_scale,
            tile_size: uv_scale * scale,
            pattern_angle,
            colors: [a * tone, b * tone],
            noise_seed: s.next_u64(),
        }
    }

    /// Slab whose top face is the plane `z = 0`.
    pub fn mesh(&self) -> TriMesh {
        let [hx, hy] = self.half_extents;
        let pts = match self.shape {
            FloorShape::Cube => crate::geometry::mesh::box_points(DVec3::new(hx, hy, self.thickness / 2.0), 0.0),
            FloorShape::Cylinder => {
                let mut p = ring_points(hx, hy, 0.0, 64);
                p.extend(ring_points(hx, hy, -self.thickness, 64));
                p
            }
        };
        let m = TriMesh::convex(&pts, 0);
        match self.shape {
            FloorShape::Cube => m.transformed(
                glam::DQuat::IDENTITY,
                DVec3::ONE,
                DVec3::new(0.0, 0.0, -self.thickness / 2.0),
            ),
            FloorShape::Cylinder => m,
        }
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        let [hx, hy] = self.half_extents;
        match self.shape {
            FloorShape::Cube => x.abs() <= hx && y.abs() <= hy,
            FloorShape::Cylinder => (x / hx).powi(2) + (y / hy).powi(2) <= 1.0,
        }
    }

    /// Reflectance of the floor top at world `(x, y)`.
    pub fn albedo_at(&self, x: f64, y: f64) -> DVec3 {
        let (sn, cs) = self.pattern_angle.sin_cos();
        let u = (cs * x + sn * y) / self.tile_size;
        let v = (-sn * x + cs * y) / self.tile_size;
        let t = match self.pattern {
            FloorPattern::Checker => ((u.floor() + v.floor()) as i64).rem_euclid(2) as f64,
            FloorPattern::Stripes => {
                if (u.rem_euclid(1.0)) < 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            FloorPattern::DotGrid => {
                let du = u.rem_euclid(1.0) - 0.5;
                let dv = v.rem_euclid(1.0) - 0.5;
                if du * du + dv * dv < 0.09 {
                    1.0
                } else {
                    0.0
                }
            }
            FloorPattern::ValueNoise => value_noise(u, v, self.noise_seed),
        };
        self.colors[0].lerp(self.colors[1], t)
    }
}

fn lattice(ix: i64, iy: i64, seed: u64) -> f64 {
    let mut h =
        seed ^ (ix as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (iy as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(u: f64, v: f64, seed: u64) -> f64 {
    let (x0, y0) = (u.floor(), v.floor());
    let (fx, fy) = (u - x0, v - y0);
    let (sx, sy) = (fx * fx * (3.0 - 2.0 * fx), fy * fy * (3.0 - 2.0 * fy));
    let (ix, iy) = (x0 as i64, y0 as i64);
    let a = lattice(ix, iy, seed);
    let b = lattice(ix + 1, iy, seed);
    let c = lattice(ix, iy + 1, seed);
    let d = lattice(ix + 1, iy + 1, seed);
    let top = a + (b - a) * sx;
    let bottom = c + (d - c) * sx;
    top + (bottom - top) * sy
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainerKind {
    Tray,
    Plate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerSpec {
    pub kind: ContainerKind,
    /// Per-axis scale factors (multiples of s) sampled independently.
    pub scales: [f64; 3],
    /// `(hx, hy, wall height)` in world units.
    pub half_extents: DVec3,
    pub base_thickness: f64,
    pub wall_thickness: f64,
    pub color: ColorName,
    pub aabb: Aabb,
}

const PLATE_SEGMENTS: usize = 24;

impl ContainerSpec {
    pub(crate) fn sample(s: &mut RngStream, scale: f64, half_range: [f64; 2], height_range: [f64; 2]) -> ContainerSpec {
        let kind = if s.bernoulli(0.5) {
            ContainerKind::Tray
        } else {
            ContainerKind::Plate
        };
        let scales = [s.range(half_range), s.range(half_range), s.range(height_range)];
        let half_extents = DVec3::from_array(scales) * scale;
        let color = ColorName::ALL[s.index(ColorName::ALL.len())];
        let aabb = Aabb::new(
            DVec3::new(-half_extents.x, -half_extents.y, 0.0),
            DVec3::new(half_extents.x, half_extents.y, half_extents.z),
        );
        ContainerSpec {
            kind,
            scales,
            half_extents,
            base_thickness: 0.004 * scale,
            wall_thickness: 0.01 * scale,
            color,
            aabb,
        }
    }

    /// Convex pieces in world coordinates: the base followed by the walls.
    pub fn pieces(&self) -> Vec<Vec<DVec3>> {
        let h = self.half_extents;
        let (tb, tw) = (self.base_thickness, self.wall_thickness);
        let cuboid = |min: DVec3, max: DVec3| {
            let c = (min + max) / 2.0;
            crate::geometry::mesh::box_points((max - min) / 2.0, 0.0)
                .into_iter()
                .map(|p| p + c)
                .collect::<Vec<_>>()
        };
        match self.kind {
            ContainerKind::Tray => vec![
                cuboid(DVec3::new(-h.x, -h.y, 0.0), DVec3::new(h.x, h.y, tb)),
                cuboid(DVec3::new(-h.x, -h.y, tb), DVec3::new(-h.x + tw, h.y, h.z)),
                cuboid(DVec3::new(h.x - tw, -h.y, tb), DVec3::new(h.x, h.y, h.z)),
                cuboid(DVec3::new(-h.x + tw, -h.y, tb), DVec3::new(h.x - tw, -h.y + tw, h.z)),
                cuboid(DVec3::new(-h.x + tw, h.y - tw, tb), DVec3::new(h.x - tw, h.y, h.z)),
            ],
            ContainerKind::Plate => {
                let mut base = ring_points(h.x, h.y, 0.0, PLATE_SEGMENTS * 2);
                base.extend(ring_points(h.x, h.y, tb, PLATE_SEGMENTS * 2));
                let mut out = vec![base];
                let n = PLATE_SEGMENTS;
                for k in 0..n {
                    let mut piece = Vec::with_capacity(8);
                    for a in [k, k + 1] {
                        let th = a as f64 / n as f64 * std::f64::consts::TAU;
                        let (sn, cs) = th.sin_cos();
                        for (rx, ry) in [(h.x, h.y), (h.x - tw, h.y - tw)] {
                            piece.push(DVec3::new(rx * cs, ry * sn, tb));
                            piece.push(DVec3::new(rx * cs, ry * sn, h.z));
                        }
                    }
                    out.push(piece);
                }
                out
            }
        }
    }

    pub fn mesh(&self) -> TriMesh {
        let mut m = TriMesh::default();
        for p in self.pieces() {
            m.append(&TriMesh::convex(&p, 0));
        }
        m
    }

    /// Half axes of the spawn ellipse after shrinking by `margin`.
    pub fn spawn_ellipse(&self, margin: f64) -> [f64; 2] {
        [
            (self.half_extents.x - margin).max(0.0),
            (self.half_extents.y - margin).max(0.0),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    #[test]
    fn floor_top_is_at_zero() {
        let mut s = derive_stream(1, 0, "floor");
        for _ in 0..8 {
            let f = FloorSpec::sample(&mut s, 10.0, [1.5, 2.5], [0.04, 0.1]);
            let b = f.mesh().aabb();
            assert!(b.max.z.abs() < 1e-12 && (b.min.z + f.thickness).abs() < 1e-12);
            assert!((0.04..=0.1).contains(&f.uv_scale));
        }
    }

    #[test]
    fn container_pieces_fill_its_aabb() {
        let mut s = derive_stream(1, 0, "container");
        for _ in 0..8 {
            let c = ContainerSpec::sample(&mut s, 10.0, [0.25, 0.4], [0.02, 0.05]);
            let b = c.mesh().aabb();
            assert!((b.min - c.aabb.min).abs().max_element() < 1e-9);
            assert!((b.max - c.aabb.max).abs().max_element() < 1e-9);
            assert!(c.scales.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn patterns_are_two_tone() {
        let mut s = derive_stream(2, 0, "floor");
        let f = FloorSpec::sample(&mut s, 10.0, [1.5, 2.5], [0.04, 0.1]);
        for i in 0..100 {
            let c = f.albedo_at(i as f64 * 0.37, i as f64 * -0.21);
            assert!(c.min_element() >= 0.0 && c.max_element() <= 1.0);
        }
    }
}
