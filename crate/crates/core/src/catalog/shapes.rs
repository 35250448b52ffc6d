//! Procedural object families.
//!
//! Each category is a parametric shape; a template fixes the parameters. All
//! meshes are built in a z-up canonical pose and normalized to unit extent.

use glam::{DQuat, DVec3};
use serde::{Deserialize, Serialize};

use crate::geometry::mesh::{box_points, capsule_points, ellipsoid_points, frustum_points};
use crate::geometry::TriMesh;
use crate::rng::RngStream;

const SEGMENTS: usize = 16;
const RINGS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Ball,
    Block,
    Bottle,
    Figurine,
    Can,
    Pill,
    Cone,
    Ring,
    Egg,
    Puck,
    Cup,
    Mushroom,
}

impl Category {
    pub const ALL: [Category; 12] = [
        Category::Ball,
        Category::Block,
        Category::Bottle,
        Category::Figurine,
        Category::Can,
        Category::Pill,
        Category::Cone,
        Category::Ring,
        Category::Egg,
        Category::Puck,
        Category::Cup,
        Category::Mushroom,
    ];

    pub fn noun(self) -> &'static str {
        match self {
            Category::Ball => "ball",
            Category::Block => "block",
            Category::Bottle => "bottle",
            Category::Figurine => "figurine",
            Category::Can => "can",
            Category::Pill => "pill",
            Category::Cone => "cone",
            Category::Ring => "ring",
            Category::Egg => "egg",
            Category::Puck => "puck",
            Category::Cup => "cup",
            Category::Mushroom => "mushroom",
        }
    }
}

/// Shape parameters of one template. Ratios are dimensionless; the mesh is
/// normalized afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ShapeParams {
    Ellipsoid {
        radii: [f64; 3],
    },
    Block {
        half: [f64; 3],
        bevel: f64,
    },
    Cylinder {
        aspect: f64,
    },
    Capsule {
        aspect: f64,
    },
    Frustum {
        aspect: f64,
        top_ratio: f64,
    },
    Torus {
        thickness: f64,
    },
    Bottle {
        body_aspect: f64,
        neck_ratio: f64,
    },
    Figurine {
        head_ratio: f64,
        body_aspect: f64,
        conical: bool,
    },
    Mushroom {
        cap_ratio: f64,
        stem_ratio: f64,
    },
}

impl ShapeParams {
    pub fn sample(category: Category, s: &mut RngStream) -> ShapeParams {
        let mut u = |lo: f64, hi: f64| s.uniform(lo, hi).expect("static range");
        match category {
            Category::Ball => ShapeParams::Ellipsoid {
                radii: [1.0, 1.0, u(0.82, 1.0)],
            },
            Category::Egg => {
                let e = u(1.2, 1.55);
                ShapeParams::Ellipsoid {
                    radii: [1.0, u(0.9, 1.0), e],
                }
            }
            Category::Block => ShapeParams::Block {
                half: [1.0, u(0.35, 1.0), u(0.25, 1.0)],
                bevel: if u(0.0, 1.0) < 0.4 { u(0.15, 0.35) } else { 0.0 },
            },
            Category::Can => ShapeParams::Cylinder { aspect: u(0.9, 2.1) },
            Category::Puck => ShapeParams::Cylinder { aspect: u(0.18, 0.45) },
            Category::Pill => ShapeParams::Capsule { aspect: u(1.6, 3.2) },
            Category::Cone => ShapeParams::Frustum {
                aspect: u(0.8, 2.0),
                top_ratio: u(0.0, 0.25),
            },
            Category::Cup => ShapeParams::Frustum {
                aspect: u(0.7, 1.4),
                top_ratio: u(1.2, 1.6),
            },
            Category::Ring => ShapeParams::Torus {
                thickness: u(0.22, 0.45),
            },
            Category::Bottle => ShapeParams::Bottle {
                body_aspect: u(1.2, 2.2),
                neck_ratio: u(0.25, 0.45),
            },
            Category::Figurine => ShapeParams::Figurine {
                head_ratio: u(0.45, 0.8),
                body_aspect: u(1.0, 1.8),
                conical: u(0.0, 1.0) < 0.5,
            },
            Category::Mushroom => ShapeParams::Mushroom {
                cap_ratio: u(1.5, 2.4),
                stem_ratio: u(0.6, 1.3),
            },
        }
    }

    /// Canonical mesh, z up, normalized so the largest AABB extent is 1.
    /// Part 0 carries the primary albedo, part 1 the secondary.
    pub fn mesh(&self) -> TriMesh {
        let mesh = match *self {
            ShapeParams::Ellipsoid { radii } => TriMesh::convex(
                &ellipsoid_points(DVec3::from_array(radii), SEGMENTS, RINGS, [-1.0, 1.0]),
                0,
            ),
            ShapeParams::Block { half, bevel } => TriMesh::convex(&box_points(DVec3::from_array(half), bevel), 0),
            ShapeParams::Cylinder { aspect } => TriMesh::convex(&frustum_points(0.5, 0.5, 0.0, aspect, SEGMENTS), 0),
            ShapeParams::Capsule { aspect } => {
                let r = 0.5;
                let half_len = (aspect * 0.5 - r).max(0.05);
                let pts = capsule_points(r, half_len, SEGMENTS, RINGS / 2);
                TriMesh::convex(&pts, 0).transformed(
                    DQuat::from_rotation_y(std::f64::consts::FRAC_PI_2),
                    DVec3::ONE,
                    DVec3::ZERO,
                )
            }
            ShapeParams::Frustum { aspect, top_ratio } => {
                TriMesh::convex(&frustum_points(0.5, 0.5 * top_ratio, 0.0, aspect, SEGMENTS), 0)
            }
            ShapeParams::Torus { thickness } => {
                let minor = 0.5 * thickness;
                TriMesh::torus(1.0, minor, 2 * SEGMENTS, 8, 0)
            }
            ShapeParams::Bottle {
                body_aspect,
                neck_ratio,
            } => {
                let body_h = body_aspect;
                let neck_r = 0.5 * neck_ratio;
                let shoulder = 0.35;
                let neck_h = 0.35;
                let mut m = TriMesh::convex(&frustum_points(0.5, 0.5, 0.0, body_h, SEGMENTS), 0);
                m.append(&TriMesh::convex(
                    &frustum_points(0.5, neck_r, body_h - 1e-3, body_h + shoulder, SEGMENTS),
                    0,
                ));
                m.append(&TriMesh::convex(
                    &frustum_points(
                        neck_r,
                        neck_r,
                        body_h + shoulder - 1e-3,
                        body_h + shoulder + neck_h,
                        SEGMENTS,
                    ),
                    0,
                ));
                m.append(&TriMesh::convex(
                    &frustum_points(
                        neck_r * 1.15,
                        neck_r * 1.15,
                        body_h + shoulder + neck_h - 1e-3,
                        body_h + shoulder + neck_h + 0.12,
                        SEGMENTS,
                    ),
                    1,
                ));
                m
            }
            ShapeParams::Figurine {
                head_ratio,
                body_aspect,
                conical,
            } => {
                let base_h = 0.12;
                let body_h = body_aspect * 0.6;
                let head_r = 0.3 * head_ratio;
                let mut m = TriMesh::convex(&frustum_points(0.5, 0.5, 0.0, base_h, SEGMENTS), 1);
                let top = if conical { 0.08 } else { 0.28 };
                m.append(&TriMesh::convex(
                    &frustum_points(0.32, top, base_h - 1e-3, base_h + body_h, SEGMENTS),
                    0,
                ));
                let head: Vec<DVec3> = ellipsoid_points(DVec3::splat(head_r), SEGMENTS, RINGS, [-1.0, 1.0])
                    .into_iter()
                    .map(|p| p + DVec3::new(0.0, 0.0, base_h + body_h + head_r * 0.85))
                    .collect();
                m.append(&TriMesh::convex(&head, 0));
                m
            }
            ShapeParams::Mushroom { cap_ratio, stem_ratio } => {
                let stem_r = 0.18;
                let stem_h = stem_ratio * 0.5;
                let cap_r = stem_r * cap_ratio * 1.4;
                let mut m = TriMesh::convex(&frustum_points(stem_r, stem_r * 0.85, 0.0, stem_h, SEGMENTS), 1);
                let cap: Vec<DVec3> =
                    ellipsoid_points(DVec3::new(cap_r, cap_r, cap_r * 0.6), SEGMENTS, RINGS, [0.0, 1.0])
                        .into_iter()
                        .map(|p| p + DVec3::new(0.0, 0.0, stem_h - 0.02))
                        .collect();
                m.append(&TriMesh::convex(&cap, 0));
                m
            }
        };
        mesh.normalized()
    }

    /// Short phrase describing the shape, used in detailed descriptions.
    pub fn shape_clause(&self) -> String {
        match *self {
            ShapeParams::Ellipsoid { radii } => {
                let [x, y, z] = radii;
                if z > 1.35 {
                    "strongly elongated".into()
                } else if z > 1.1 {
                    "gently elongated".into()
                } else if z < 0.9 {
                    "noticeably flattened".into()
                } else if z < 0.97 || y < 0.95 * x {
                    "slightly flattened".into()
                } else {
                    "perfectly round".into()
                }
            }
            ShapeParams::Block { half, bevel } => {
                let [_, y, z] = half;
                let body = if y > 0.85 && z > 0.85 {
                    "cube-like"
                } else if z < 0.45 {
                    "flat"
                } else if y < 0.55 {
                    "long and narrow"
                } else {
                    "brick-shaped"
                };
                if bevel > 0.0 {
                    format!("{body} with chamfered edges")
                } else {
                    format!("{body} with sharp edges")
                }
            }
            ShapeParams::Cylinder { aspect } => match aspect {
                a if a < 0.3 => "very thin".into(),
                a if a < 0.5 => "thin".into(),
                a if a < 1.3 => "squat".into(),
                a if a < 1.7 => "medium height".into(),
                _ => "tall and slender".into(),
            },
            ShapeParams::Capsule { aspect } => {
                if aspect < 2.2 {
                    "short and rounded".into()
                } else if aspect < 2.7 {
                    "oblong".into()
                } else {
                    "long and rounded".into()
                }
            }
            ShapeParams::Frustum { aspect, top_ratio } => {
                let height = if aspect < 1.1 {
                    "low"
                } else if aspect < 1.5 {
                    "medium"
                } else {
                    "tall"
                };
                if top_ratio < 0.05 {
                    format!("{height} with a sharp tip")
                } else if top_ratio < 1.0 {
                    format!("{height} with a blunt tip")
                } else if top_ratio < 1.4 {
                    format!("{height} with a gently flared rim")
                } else {
                    format!("{height} with a wide flared rim")
                }
            }
            ShapeParams::Torus { thickness } => {
                if thickness < 0.3 {
                    "thin band".into()
                } else if thickness < 0.38 {
                    "medium band".into()
                } else {
                    "thick band".into()
                }
            }
            ShapeParams::Bottle {
                body_aspect,
                neck_ratio,
            } => {
                let body = if body_aspect < 1.6 { "stout" } else { "slim" };
                let neck = if neck_ratio < 0.35 { "narrow neck" } else { "wide neck" };
                format!("{body} body and a {neck}")
            }
            ShapeParams::Figurine {
                head_ratio, conical, ..
            } => {
                let head = if head_ratio < 0.62 { "small head" } else { "large head" };
                let body = if conical { "cone-shaped body" } else { "rounded body" };
                format!("{head} on a {body}")
            }
            ShapeParams::Mushroom { cap_ratio, stem_ratio } => {
                let cap = if cap_ratio < 1.95 { "narrow cap" } else { "broad cap" };
                let stem = if stem_ratio < 0.95 { "short stem" } else { "long stem" };
                format!("{cap} and a {stem}")
            }
        }
    }

    /// Whether the shape is a single ellipsoid (affects texture mapping).
    pub fn is_round(&self) -> bool {
        matches!(self, ShapeParams::Ellipsoid { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    #[test]
    fn every_family_normalizes_and_fits_hull_budget() {
        let mut s = derive_stream(0, 0, "shapes");
        for cat in Category::ALL {
            for _ in 0..10 {
                let p = ShapeParams::sample(cat, &mut s);
                let m = p.mesh();
                let e = m.aabb().extent().max_element();
                assert!((e - 1.0).abs() < 1e-6, "{cat:?} extent {e}");
                assert!(m.aabb().center().length() < 1e-9);
                assert!(m.vertex_count() <= 512, "{cat:?} has {} vertices", m.vertex_count());
                assert!(m.triangles.iter().all(|t| {
                    let [a, b, c] = [t[0], t[1], t[2]].map(|i| m.positions[i as usize]);
                    (b - a).cross(c - a).length() > 0.0
                }));
            }
        }
    }
}
