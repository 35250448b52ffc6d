//! Geometry primitives shared by the catalog, settler and renderer.

mod aabb;
pub mod bvh;
pub mod mesh;

pub use aabb::{Aabb, Ray};
pub use bvh::{Bvh, MeshBvh, TriHit};
pub use mesh::TriMesh;

pub use glam::{DMat3, DQuat, DVec3};

use serde::{Deserialize, Serialize};

/// Similarity transform: `world = rotation * (scale * local) + position`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: DVec3,
    pub rotation: DQuat,
    pub scale: f64,
}

impl Pose {
    pub fn to_world(&self, local: DVec3) -> DVec3 {
        self.rotation * (local * self.scale) + self.position
    }

    pub fn to_local(&self, world: DVec3) -> DVec3 {
        self.rotation.inverse() * (world - self.position) / self.scale
    }

    /// Ray in the local frame. The direction keeps the world parametrization,
    /// so hit distances are identical in both frames.
    pub fn ray_to_local(&self, ray: &Ray) -> Ray {
        let inv = self.rotation.inverse();
        Ray::new(
            inv * (ray.origin - self.position) / self.scale,
            inv * ray.dir / self.scale,
        )
    }

    pub fn normal_to_world(&self, n: DVec3) -> DVec3 {
        (self.rotation * n).normalize_or_zero()
    }

    /// Tight world AABB of transformed points.
    pub fn bound_points(&self, points: &[DVec3]) -> Aabb {
        points.iter().fold(Aabb::EMPTY, |b, p| b.grow(self.to_world(*p)))
    }
}
