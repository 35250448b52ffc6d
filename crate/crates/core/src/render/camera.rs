//! Pinhole camera on a hemisphere around the counted objects.

use glam::{DQuat, DVec3};
use serde::{Deserialize, Serialize};

use crate::config::GeneratorConfig;
use crate::geometry::{Aabb, Ray};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub origin: DVec3,
    pub look_at: DVec3,
    /// Azimuth, radians.
    pub azimuth: f64,
    /// Elevation above the horizontal, radians.
    pub elevation: f64,
    pub radius: f64,
    /// `camera_distance_factor * |diag|` before jitter.
    pub base_distance: f64,
    pub radius_jitter: f64,
    pub roll: f64,
    pub vertical_fov: f64,
    pub resolution: usize,
}

/// Orthonormal camera frame.
#[derive(Debug, Clone, Copy)]
pub struct Basis {
    pub forward: DVec3,
    pub right: DVec3,
    pub up: DVec3,
}

impl CameraSpec {
    /// Camera placed at `(azimuth, elevation, radius)` around `look_at`.
    pub fn orbit(
        look_at: DVec3,
        azimuth: f64,
        elevation: f64,
        radius: f64,
        roll: f64,
        vertical_fov: f64,
        resolution: usize,
    ) -> CameraSpec {
        let dir = DVec3::new(
            elevation.cos() * azimuth.cos(),
            elevation.cos() * azimuth.sin(),
            elevation.sin(),
        );
        CameraSpec {
            origin: look_at + dir * radius,
            look_at,
            azimuth,
            elevation,
            radius,
            base_distance: radius,
            radius_jitter: 0.0,
            roll,
            vertical_fov,
            resolution,
        }
    }

    pub fn basis(&self) -> Basis {
        let forward = (self.look_at - self.origin).normalize();
        let mut right = forward.cross(DVec3::Z);
        if right.length_squared() < 1e-20 {
            right = DVec3::X;
        }
        right = right.normalize();
        let up = right.cross(forward);
        let q = DQuat::from_axis_angle(forward, self.roll);
        Basis {
            forward,
            right: q * right,
            up: q * up,
        }
    }

    fn tan_half(&self) -> f64 {
        (self.vertical_fov / 2.0).tan()
    }

    /// Ray through the point `(x, y)` of the image plane, in pixels with
    /// `(0, 0)` at the top-left corner. Pixel centers sit at `+0.5`.
    pub fn ray_through(&self, basis: &Basis, x: f64, y: f64) -> Ray {
        let n = self.resolution as f64;
        let th = self.tan_half();
        let sx = (2.0 * x / n - 1.0) * th;
        let sy = (1.0 - 2.0 * y / n) * th;
        Ray::new(
            self.origin,
            (basis.forward + basis.right * sx + basis.up * sy).normalize(),
        )
    }

    pub fn primary_ray(&self, basis: &Basis, px: usize, py: usize) -> Ray {
        self.ray_through(basis, px as f64 + 0.5, py as f64 + 0.5)
    }

    /// Continuous image coordinates of a point, or `None` behind the camera.
    pub fn project(&self, basis: &Basis, p: DVec3) -> Option<[f64; 2]> {
        let d = p - self.origin;
        let z = d.dot(basis.forward);
        if z <= 1e-12 {
            return None;
        }
        let n = self.resolution as f64;
        let th = self.tan_half();
        let sx = d.dot(basis.right) / z / th;
        let sy = d.dot(basis.up) / z / th;
        Some([(sx + 1.0) * n / 2.0, (1.0 - sy) * n / 2.0])
    }

    /// Pixel bounds `[x0, y0, x1, y1)` covering the projection of a box,
    /// grown by `margin`; the whole frame if any corner is behind the camera.
    pub fn screen_bounds(&self, basis: &Basis, b: &Aabb, margin: f64) -> [usize; 4] {
        let n = self.resolution;
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for c in b.corners() {
            let Some(p) = self.project(basis, c) else {
                return [0, 0, n, n];
            };
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let clamp = |v: f64| v.clamp(0.0, n as f64) as usize;
        [
            clamp((lo[0] - margin).floor()),
            clamp((lo[1] - margin).floor()),
            clamp((hi[0] + margin).ceil()),
            clamp((hi[1] + margin).ceil()),
        ]
    }
}

/// Pixel holding a point when it projects inside the frame, in front of the camera.
pub fn project_origin(camera: &CameraSpec, point: DVec3) -> Option<[usize; 2]> {
    let p = camera.project(&camera.basis(), point)?;
    let n = camera.resolution as f64;
    ((0.0..n).contains(&p[0]) && (0.0..n).contains(&p[1])).then(|| [p[0] as usize, p[1] as usize])
}

/// Samples the scene camera. `bounds` is the container AABB, or the joint
/// AABB of the objects when there is none; `centroid` is the mean position
/// of the counted objects.
pub fn sample_camera(bounds: &Aabb, centroid: DVec3, stream: &mut RngStream, config: &GeneratorConfig) -> CameraSpec {
    let deg = std::f64::consts::PI / 180.0;
    let diag = bounds.diagonal();
    let base = config.camera_distance_factor * diag;
    let el = stream.range(config.elevation_range_deg) * deg;
    let az = stream.unit() * std::f64::consts::TAU;
    let roll = stream.range(config.roll_range_deg) * deg;
    let rho = stream.range([-config.radius_jitter, config.radius_jitter]);
    // Uniform point in a ball of radius `look_at_jitter * diag`.
    let jitter = {
        let r = config.look_at_jitter * diag * stream.unit().cbrt();
        let z = stream.range([-1.0, 1.0]);
        let a = stream.unit() * std::f64::consts::TAU;
        let q = (1.0 - z * z).sqrt();
        DVec3::new(q * a.cos(), q * a.sin(), z) * r
    };
    let mut cam = CameraSpec::orbit(
        centroid + jitter,
        az,
        el,
        base * (1.0 + rho),
        roll,
        config.vertical_fov_deg * deg,
        config.resolution,
    );
    cam.base_distance = base;
    cam.radius_jitter = rho;
    cam
}
