//! Canonical renders of a template on a white background.

use glam::DVec3;
use image::RgbImage;

use super::ObjectTemplate;
use crate::render::{CameraSpec, Lighting};

/// Object pixels are kept at or below this value so the background stays
/// the only pure white.
const MAX_OBJECT_LEVEL: u8 = 250;

/// Fraction of the half-frame the bounding sphere may fill (10% margin per side).
const FILL: f64 = 0.8;

/// Three-quarter view: azimuth 45 degrees, elevation 30 degrees, fixed lights.
pub fn render_external_exemplar(t: &ObjectTemplate, resolution: usize) -> RgbImage {
    let g = &t.geometry;
    let center = g.aabb.center();
    let radius = g.mesh.positions.iter().map(|p| p.distance(center)).fold(0.0, f64::max);
    let distance = 4.0 * radius.max(1e-6);
    let half = ((radius / distance).asin().tan() / FILL).atan();
    let cam = CameraSpec::orbit(
        center,
        45f64.to_radians(),
        30f64.to_radians(),
        distance,
        0.0,
        2.0 * half,
        resolution,
    );
    let basis = cam.basis();
    let lights = Lighting::studio();
    let mut img = RgbImage::from_pixel(resolution as u32, resolution as u32, image::Rgb([255, 255, 255]));
    for y in 0..resolution {
        for x in 0..resolution {
            let ray = cam.primary_ray(&basis, x, y);
            let Some(hit) = g.bvh.intersect(&ray, f64::INFINITY) else {
                continue;
            };
            let mut n = hit.normal;
            if n.dot(ray.dir) > 0.0 {
                n = -n;
            }
            let albedo = t.albedo.color_at(ray.at(hit.t), hit.part, t.shape.is_round());
            let mut light = DVec3::splat(lights.ambient);
            for l in &lights.lights {
                light += l.color * (l.intensity * n.dot(l.direction).max(0.0));
            }
            let c = albedo * light;
            let f = |v: f64| ((v.clamp(0.0, 1.0).powf(1.0 / 2.2) * 255.0).round() as u8).min(MAX_OBJECT_LEVEL);
            img.put_pixel(x as u32, y as u32, image::Rgb([f(c.x), f(c.y), f(c.z)]));
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{build_catalog_sized, Category};

    fn nonwhite_bbox(img: &RgbImage) -> [u32; 4] {
        let mut b = [u32::MAX, u32::MAX, 0, 0];
        for (x, y, p) in img.enumerate_pixels() {
            if p.0 != [255, 255, 255] {
                b = [b[0].min(x), b[1].min(y), b[2].max(x + 1), b[3].max(y + 1)];
            }
        }
        b
    }

    #[test]
    fn white_corners_centered_and_margined() {
        let cat = build_catalog_sized(0, 24, [1.0, 0.0, 0.0]);
        for t in &cat.templates {
            let img = render_external_exemplar(t, 128);
            for (x, y) in [(0, 0), (127, 0), (0, 127), (127, 127)] {
                assert_eq!(img.get_pixel(x, y).0, [255, 255, 255]);
            }
            let [x0, y0, x1, y1] = nonwhite_bbox(&img);
            assert!(
                x0 >= 12 && y0 >= 12 && x1 <= 116 && y1 <= 116,
                "{} {:?}",
                t.template_id,
                [x0, y0, x1, y1]
            );
            if t.category == Category::Ball {
                let cx = (x0 + x1) as f64 / 2.0 / 128.0;
                let cy = (y0 + y1) as f64 / 2.0 / 128.0;
                assert!((cx - 0.5).abs() <= 0.02 && (cy - 0.5).abs() <= 0.02);
            }
        }
        let a = render_external_exemplar(&cat.templates[3], 64);
        let b = render_external_exemplar(&cat.templates[3], 64);
        assert_eq!(a.as_raw(), b.as_raw());
    }
}
