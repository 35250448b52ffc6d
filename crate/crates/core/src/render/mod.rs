//! Ray-cast rendering of the ground-truth passes.
//!
//! Geometry is a two-level hierarchy: one BVH per template mesh, shared by
//! all of its instances, and a top-level BVH over instance bounds. Rays are
//! moved into each instance frame without renormalizing, so hit distances
//! stay in world units.

mod camera;
mod mask;

use std::collections::BTreeMap;
use std::sync::Arc;

use glam::DVec3;
use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{AssetCatalog, TemplateGeometry};
use crate::config::GeneratorConfig;
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Bvh, Pose, Ray, TriMesh};
use crate::rng::RngStream;
use crate::scene::{ContainerSpec, FloorSpec, InstanceState};

pub use camera::{project_origin, sample_camera, Basis, CameraSpec};
pub use mask::BitMask;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalLight {
    /// Unit vector pointing toward the light.
    pub direction: DVec3,
    pub intensity: f64,
    pub color: DVec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lighting {
    pub lights: Vec<DirectionalLight>,
    pub ambient: f64,
}

impl Lighting {
    /// Fixed studio setup used for canonical renders.
    pub fn studio() -> Lighting {
        Lighting {
            lights: vec![
                DirectionalLight {
                    direction: DVec3::new(0.3, 0.9, 1.2).normalize(),
                    intensity: 0.75,
                    color: DVec3::ONE,
                },
                DirectionalLight {
                    direction: DVec3::new(1.0, -0.4, 0.5).normalize(),
                    intensity: 0.3,
                    color: DVec3::ONE,
                },
            ],
            ambient: 0.25,
        }
    }
}

pub fn sample_lighting(stream: &mut RngStream, config: &GeneratorConfig) -> Lighting {
    let deg = std::f64::consts::PI / 180.0;
    let n = stream
        .int(config.light_count_range[0], config.light_count_range[1])
        .expect("validated range");
    let lights = (0..n)
        .map(|_| {
            let el = stream.range([25.0, 85.0]) * deg;
            let az = stream.unit() * std::f64::consts::TAU;
            let tint = DVec3::new(
                stream.range([0.85, 1.0]),
                stream.range([0.9, 1.0]),
                stream.range([0.85, 1.0]),
            );
            DirectionalLight {
                direction: DVec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()),
                intensity: stream.range(config.light_intensity_range),
                color: tint,
            }
        })
        .collect();
    Lighting {
        lights,
        ambient: stream.range(config.ambient_range),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Material {
    Object { template_index: usize },
    Floor,
    Container { color: DVec3 },
}

#[derive(Debug, Clone)]
pub struct RenderItem {
    /// 0 for floor and container.
    pub instance_id: u32,
    pub is_distractor: bool,
    pub material: Material,
    pub pose: Pose,
    pub geometry: Arc<TemplateGeometry>,
    pub bounds: Aabb,
}

/// Immutable render-ready scene.
pub struct RenderScene<'a> {
    catalog: &'a AssetCatalog,
    floor: Option<FloorSpec>,
    pub items: Vec<RenderItem>,
    tlas: Bvh,
    pub lighting: Lighting,
}

fn static_item(mesh: TriMesh, material: Material) -> RenderItem {
    let geometry = Arc::new(TemplateGeometry::new(mesh));
    RenderItem {
        instance_id: 0,
        is_distractor: false,
        material,
        pose: Pose {
            position: DVec3::ZERO,
            rotation: glam::DQuat::IDENTITY,
            scale: 1.0,
        },
        bounds: geometry.aabb,
        geometry,
    }
}

impl<'a> RenderScene<'a> {
    /// Alive instances plus optional floor and container.
    pub fn new(
        catalog: &'a AssetCatalog,
        floor: Option<&FloorSpec>,
        container: Option<&ContainerSpec>,
        instances: &[InstanceState],
        lighting: Lighting,
    ) -> RenderScene<'a> {
        let mut items = Vec::with_capacity(instances.len() + 2);
        for inst in instances.iter().filter(|i| i.alive) {
            let geometry = catalog.templates[inst.template_index].geometry.clone();
            let pose = inst.pose();
            let pts = if geometry.hull_points.is_empty() {
                &geometry.mesh.positions
            } else {
                &geometry.hull_points
            };
            items.push(RenderItem {
                instance_id: inst.instance_id,
                is_distractor: inst.is_distractor,
                material: Material::Object {
                    template_index: inst.template_index,
                },
                pose,
                bounds: pose.bound_points(pts),
                geometry,
            });
        }
        if let Some(c) = container {
            items.push(static_item(c.mesh(), Material::Container { color: c.color.rgb() }));
        }
        if let Some(f) = floor {
            items.push(static_item(f.mesh(), Material::Floor));
        }
        let boxes: Vec<Aabb> = items.iter().map(|i| i.bounds).collect();
        RenderScene {
            catalog,
            floor: floor.cloned(),
            tlas: Bvh::build(&boxes, 2),
            items,
            lighting,
        }
    }

    pub fn item_of(&self, instance_id: u32) -> Option<usize> {
        (instance_id != 0)
            .then(|| self.items.iter().position(|i| i.instance_id == instance_id))
            .flatten()
    }

    /// Ids of every rendered object (counted and distractors).
    pub fn instance_ids(&self) -> Vec<u32> {
        self.items.iter().map(|i| i.instance_id).filter(|&id| id != 0).collect()
    }

    pub fn all_enabled(&self) -> Vec<bool> {
        vec![true; self.items.len()]
    }

    fn trace(&self, ray: &Ray, enabled: &[bool]) -> Option<PixelHit> {
        self.tlas
            .closest(ray, f64::INFINITY, |prim, t_max| {
                let k = prim as usize;
                if !enabled[k] {
                    return None;
                }
                trace_item(&self.items[k], ray, t_max).map(|h| (h.t, (k, h)))
            })
            .map(|(_, (k, h))| h.with_item(k))
    }

    fn occluded(&self, ray: &Ray, t_max: f64, enabled: &[bool]) -> bool {
        self.tlas.any(ray, t_max, |prim, tm| {
            let item = &self.items[prim as usize];
            enabled[prim as usize] && item.geometry.bvh.occluded(&item.pose.ray_to_local(ray), tm)
        })
    }

    fn albedo(&self, item: &RenderItem, p: DVec3, n: DVec3, part: u8) -> DVec3 {
        match item.material {
            Material::Object { template_index } => {
                let t = &self.catalog.templates[template_index];
                t.albedo.color_at(item.pose.to_local(p), part, t.shape.is_round())
            }
            Material::Floor => match &self.floor {
                Some(f) if n.z > 0.5 => f.albedo_at(p.x, p.y),
                Some(f) => f.colors[0] * 0.6,
                None => DVec3::splat(0.5),
            },
            Material::Container { color } => color,
        }
    }

    fn shade(&self, ray: &Ray, hit: &PixelHit, enabled: &[bool]) -> DVec3 {
        let Some(k) = hit.item() else {
            return background(ray.dir);
        };
        let p = ray.at(hit.t);
        let n = hit.normal;
        let albedo = self.albedo(&self.items[k], p, n, hit.part);
        let eps = 1e-6 * (1.0 + hit.t);
        let origin = p + n * eps * 10.0;
        let mut light = DVec3::splat(self.lighting.ambient);
        for l in &self.lighting.lights {
            let nd = n.dot(l.direction);
            if nd <= 0.0 {
                continue;
            }
            if !self.occluded(&Ray::new(origin, l.direction), f64::INFINITY, enabled) {
                light += l.color * (l.intensity * nd);
            }
        }
        albedo * light
    }
}

fn background(dir: DVec3) -> DVec3 {
    let t = dir.z.clamp(-1.0, 1.0) * 0.5 + 0.5;
    DVec3::new(0.62, 0.64, 0.66).lerp(DVec3::new(0.36, 0.42, 0.52), t)
}

/// Nearest hit of one item, with the world normal facing the ray.
fn trace_item(item: &RenderItem, ray: &Ray, t_max: f64) -> Option<PixelHit> {
    let local = item.pose.ray_to_local(ray);
    let h = item.geometry.bvh.intersect(&local, t_max)?;
    let mut n = item.pose.normal_to_world(h.normal);
    if n.dot(ray.dir) > 0.0 {
        n = -n;
    }
    Some(PixelHit {
        item: 0,
        t: h.t,
        normal: n,
        part: h.part,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct PixelHit {
    /// Item index plus one; 0 when the ray escapes.
    item: u32,
    t: f64,
    normal: DVec3,
    part: u8,
}

impl PixelHit {
    fn with_item(mut self, k: usize) -> PixelHit {
        self.item = k as u32 + 1;
        self
    }

    fn item(&self) -> Option<usize> {
        (self.item != 0).then(|| self.item as usize - 1)
    }
}

/// Nearest hit of every primary ray.
pub struct Frame {
    size: usize,
    hits: Vec<PixelHit>,
}

impl Frame {
    /// Item index hit at pixel `(x, y)`.
    pub fn item_at(&self, x: usize, y: usize) -> Option<usize> {
        self.hits[y * self.size + x].item()
    }

    /// Pixel count per item index.
    pub fn item_areas(&self, items: usize) -> Vec<usize> {
        let mut a = vec![0; items];
        for h in &self.hits {
            if let Some(k) = h.item() {
                a[k] += 1;
            }
        }
        a
    }
}

pub fn trace_frame(scene: &RenderScene<'_>, camera: &CameraSpec, enabled: &[bool]) -> Frame {
    let n = camera.resolution;
    let basis = camera.basis();
    let mut hits = vec![PixelHit::default(); n * n];
    hits.par_chunks_mut(n).enumerate().for_each(|(y, row)| {
        for (x, h) in row.iter_mut().enumerate() {
            *h = scene
                .trace(&camera.primary_ray(&basis, x, y), enabled)
                .unwrap_or_default();
        }
    });
    Frame { size: n, hits }
}

/// Re-traces the pixels whose nearest item is now disabled.
pub fn retrace_disabled(scene: &RenderScene<'_>, camera: &CameraSpec, enabled: &[bool], frame: &mut Frame) {
    let n = frame.size;
    let basis = camera.basis();
    frame.hits.par_chunks_mut(n).enumerate().for_each(|(y, row)| {
        for (x, h) in row.iter_mut().enumerate() {
            if h.item().is_some_and(|k| !enabled[k]) {
                *h = scene
                    .trace(&camera.primary_ray(&basis, x, y), enabled)
                    .unwrap_or_default();
            }
        }
    });
}

/// Pixels covered by item `k` when it is the only geometry.
pub fn item_unoccluded_mask(scene: &RenderScene<'_>, camera: &CameraSpec, k: usize) -> BitMask {
    let basis = camera.basis();
    let n = camera.resolution;
    let item = &scene.items[k];
    let window = camera.screen_bounds(&basis, &item.bounds, 2.0);
    BitMask::from_fn(n, window, |x, y| {
        trace_item(item, &camera.primary_ray(&basis, x, y), f64::INFINITY).is_some()
    })
}

pub fn render_unoccluded_mask(scene: &RenderScene<'_>, camera: &CameraSpec, instance_id: u32) -> Result<BitMask> {
    let k = scene.item_of(instance_id).ok_or(Error::UnknownInstance(instance_id))?;
    Ok(item_unoccluded_mask(scene, camera, k))
}

#[derive(Debug, Clone)]
pub struct RenderPasses {
    pub resolution: usize,
    pub rgb: RgbImage,
    /// Row-major; 0 is background, floor or container.
    pub instance_ids: Vec<u32>,
    /// Distance along the primary ray; 0 where nothing is hit.
    pub depth: Vec<f32>,
    /// World-space unit normals; zero where nothing is hit.
    pub normals: Vec<[f32; 3]>,
    pub unoccluded: BTreeMap<u32, BitMask>,
}

impl RenderPasses {
    pub fn occluded_mask(&self, instance_id: u32) -> BitMask {
        BitMask::from_ids(&self.instance_ids, self.resolution, instance_id)
    }
}

fn encode(c: DVec3) -> [u8; 3] {
    let f = |v: f64| (v.clamp(0.0, 1.0).powf(1.0 / 2.2) * 255.0).round() as u8;
    [f(c.x), f(c.y), f(c.z)]
}

/// Shades a traced frame and fills every pass except the unoccluded masks.
pub fn compose(
    scene: &RenderScene<'_>,
    camera: &CameraSpec,
    frame: &Frame,
    enabled: &[bool],
    supersample: bool,
) -> RenderPasses {
    let n = camera.resolution;
    let basis = camera.basis();
    let mut rgb = vec![[0u8; 3]; n * n];
    rgb.par_chunks_mut(n).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let c = if supersample {
                let mut acc = DVec3::ZERO;
                for (dx, dy) in [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)] {
                    let ray = camera.ray_through(&basis, x as f64 + dx, y as f64 + dy);
                    let hit = scene.trace(&ray, enabled).unwrap_or_default();
                    acc += scene.shade(&ray, &hit, enabled);
                }
                acc / 4.0
            } else {
                let ray = camera.primary_ray(&basis, x, y);
                scene.shade(&ray, &frame.hits[y * n + x], enabled)
            };
            *out = encode(c);
        }
    });
    let rgb = RgbImage::from_raw(n as u32, n as u32, rgb.into_iter().flatten().collect()).expect("sized buffer");
    let mut instance_ids = vec![0u32; n * n];
    let mut depth = vec![0f32; n * n];
    let mut normals = vec![[0f32; 3]; n * n];
    for (i, h) in frame.hits.iter().enumerate() {
        if let Some(k) = h.item() {
            instance_ids[i] = scene.items[k].instance_id;
            depth[i] = h.t as f32;
            normals[i] = h.normal.as_vec3().to_array();
        }
    }
    RenderPasses {
        resolution: n,
        rgb,
        instance_ids,
        depth,
        normals,
        unoccluded: BTreeMap::new(),
    }
}

/// Full render: all passes plus the unoccluded mask of every object.
pub fn render_passes(scene: &RenderScene<'_>, camera: &CameraSpec, supersample: bool) -> RenderPasses {
    let enabled = scene.all_enabled();
    let frame = trace_frame(scene, camera, &enabled);
    let mut passes = compose(scene, camera, &frame, &enabled, supersample);
    passes.unoccluded = unoccluded_masks(scene, camera, &enabled);
    passes
}

/// Unoccluded masks of the enabled objects, keyed by instance id.
pub fn unoccluded_masks(scene: &RenderScene<'_>, camera: &CameraSpec, enabled: &[bool]) -> BTreeMap<u32, BitMask> {
    (0..scene.items.len())
        .into_par_iter()
        .filter(|&k| enabled[k] && scene.items[k].instance_id != 0)
        .map(|k| (scene.items[k].instance_id, item_unoccluded_mask(scene, camera, k)))
        .collect()
}
