//! Quasi-static settling of spawned objects on convex proxies.
//!
//! Objects are seated lowest first. Each one falls straight down until its
//! proxy comes within a small gap of the floor, the container or an object
//! already at rest, then tries short lateral slides that are kept only when
//! they lower it. Every accepted move strictly lowers one object, so the
//! total potential energy never increases.

use std::collections::BTreeMap;

use glam::{DQuat, DVec3};
use parry3d_f64::math::Pose as PPose;
use parry3d_f64::query::{self, ShapeCastOptions};
use parry3d_f64::shape::{Ball, ConvexPolyhedron, Shape};
use serde::{Deserialize, Serialize};

use crate::catalog::AssetCatalog;
use crate::config::GeneratorConfig;
use crate::geometry::Aabb;
use crate::rng::RngStream;
use crate::scene::{ContainerSpec, InstanceState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettleParams {
    pub max_steps: u32,
    pub substeps: u32,
    pub solver_iterations: u32,
    pub gravity: f64,
    pub restitution: f64,
    pub penetration_tolerance: f64,
}

impl SettleParams {
    pub fn from_config(c: &GeneratorConfig) -> SettleParams {
        SettleParams {
            max_steps: c.settle_max_steps,
            substeps: c.settle_substeps,
            solver_iterations: c.settle_solver_iterations,
            gravity: c.gravity,
            restitution: 0.0,
            penetration_tolerance: c.scaled(c.penetration_tolerance),
        }
    }

    fn gap(&self) -> f64 {
        0.25 * self.penetration_tolerance
    }
}

#[derive(Debug, Clone)]
pub enum ProxyShape {
    Sphere(Ball),
    Hull(ConvexPolyhedron),
}

/// Convex stand-in for one object; centered on the instance position.
#[derive(Debug, Clone)]
pub struct CollisionProxy {
    pub id: u32,
    pub shape: ProxyShape,
    pub position: DVec3,
    pub rotation: DQuat,
}

impl CollisionProxy {
    pub fn sphere(id: u32, radius: f64, position: DVec3) -> CollisionProxy {
        CollisionProxy {
            id,
            shape: ProxyShape::Sphere(Ball::new(radius)),
            position,
            rotation: DQuat::IDENTITY,
        }
    }

    /// Hull of `points` given in the object's local (already scaled) frame.
    pub fn hull(id: u32, points: &[DVec3], position: DVec3, rotation: DQuat) -> Option<CollisionProxy> {
        Some(CollisionProxy {
            id,
            shape: ProxyShape::Hull(ConvexPolyhedron::from_convex_hull(points)?),
            position,
            rotation,
        })
    }

    pub fn shape(&self) -> &dyn Shape {
        match &self.shape {
            ProxyShape::Sphere(b) => b,
            ProxyShape::Hull(h) => h,
        }
    }

    fn pose(&self) -> PPose {
        PPose::from_parts(self.position, self.rotation)
    }

    pub fn aabb(&self) -> Aabb {
        match &self.shape {
            ProxyShape::Sphere(b) => Aabb::from_center_half(self.position, DVec3::splat(b.radius)),
            ProxyShape::Hull(h) => h
                .points()
                .iter()
                .fold(Aabb::EMPTY, |a, p| a.grow(self.rotation * *p + self.position)),
        }
    }

    fn bottom(&self) -> f64 {
        match &self.shape {
            ProxyShape::Sphere(b) => self.position.z - b.radius,
            ProxyShape::Hull(h) => {
                h.points()
                    .iter()
                    .map(|p| (self.rotation * *p).z)
                    .fold(f64::INFINITY, f64::min)
                    + self.position.z
            }
        }
    }

    /// Rotates the hull so the face pointing most downward lies flat.
    fn tip_to_stable_face(&mut self) {
        let ProxyShape::Hull(h) = &self.shape else { return };
        let down = h
            .faces()
            .iter()
            .map(|f| self.rotation * f.normal)
            .min_by(|a, b| a.z.total_cmp(&b.z));
        if let Some(n) = down {
            let q = DQuat::from_rotation_arc(n.normalize(), DVec3::NEG_Z);
            self.rotation = (q * self.rotation).normalize();
        }
    }

    /// Proxy volume, for the containment budget check.
    pub fn volume(&self) -> f64 {
        self.shape().mass_properties(1.0).mass()
    }
}

/// Static collider: a convex container piece in world coordinates.
struct StaticPiece {
    shape: ConvexPolyhedron,
    aabb: Aabb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Support {
    Floor,
    Static(usize),
    Body(usize),
}

struct World<'a> {
    params: &'a SettleParams,
    statics: Vec<StaticPiece>,
    bodies: Vec<CollisionProxy>,
    boxes: Vec<Aabb>,
    /// Whether a body currently takes part in collisions.
    active: Vec<bool>,
    scratch: Vec<usize>,
}

fn cast_options(max: f64, gap: f64) -> ShapeCastOptions {
    ShapeCastOptions {
        max_time_of_impact: max,
        target_distance: gap,
        stop_at_penetration: false,
        compute_impact_geometry_on_penetration: true,
    }
}

impl World<'_> {
    /// Sweeps body `i` along `dir` (unit) for at most `max`. Returns the
    /// travel and what stopped it, with the world contact normal on `i`.
    fn sweep(&mut self, i: usize, dir: DVec3, max: f64) -> (f64, Option<(Support, DVec3)>) {
        let gap = self.params.gap();
        let me = &self.bodies[i];
        let start = self.boxes[i];
        let swept = start
            .union(Aabb::new(start.min + dir * max, start.max + dir * max))
            .expanded(gap);
        let mut best = max;
        let mut hit = None;
        if dir.z < 0.0 {
            let floor_t = ((me.bottom() - gap) / -dir.z).max(0.0);
            if floor_t <= best {
                best = floor_t;
                hit = Some((Support::Floor, DVec3::NEG_Z));
            }
        }
        let pose = me.pose();
        let shape = me.shape();
        let mut scratch = std::mem::take(&mut self.scratch);
        scratch.clear();
        for (j, b) in self.boxes.iter().enumerate() {
            if j != i && self.active[j] && b.overlaps(&swept) {
                scratch.push(j);
            }
        }
        for &j in &scratch {
            let other = &self.bodies[j];
            let r = query::cast_shapes(
                &pose,
                dir,
                shape,
                &other.pose(),
                DVec3::ZERO,
                other.shape(),
                cast_options(best, gap),
            );
            if let Ok(Some(h)) = r {
                if h.time_of_impact <= best {
                    best = h.time_of_impact;
                    hit = Some((Support::Body(j), me.rotation * h.normal1));
                }
            }
        }
        for (k, piece) in self.statics.iter().enumerate() {
            if !piece.aabb.overlaps(&swept) {
                continue;
            }
            let r = query::cast_shapes(
                &pose,
                dir,
                shape,
                &PPose::IDENTITY,
                DVec3::ZERO,
                &piece.shape,
                cast_options(best, gap),
            );
            if let Ok(Some(h)) = r {
                if h.time_of_impact <= best {
                    best = h.time_of_impact;
                    hit = Some((Support::Static(k), me.rotation * h.normal1));
                }
            }
        }
        self.scratch = scratch;
        (best.max(0.0), hit)
    }

    fn translate(&mut self, i: usize, d: DVec3) {
        self.bodies[i].position += d;
        self.boxes[i] = Aabb::new(self.boxes[i].min + d, self.boxes[i].max + d);
    }

    fn drop(&mut self, i: usize) -> Option<(Support, DVec3)> {
        let height = self.bodies[i].bottom().max(0.0) + self.params.penetration_tolerance;
        let (t, hit) = self.sweep(i, DVec3::NEG_Z, height);
        self.translate(i, DVec3::NEG_Z * t);
        hit
    }

    /// Drops body `i`, then slides it downhill while that keeps lowering it.
    /// Returns the number of accepted moves.
    fn relax(&mut self, i: usize, stream: &mut RngStream) -> u32 {
        let mut support = self.drop(i);
        let budget = (self.params.substeps * self.params.solver_iterations).max(1);
        let step = 0.3 * self.boxes[i].extent().max_element();
        let lift = 2.0 * self.params.gap();
        let mut failures = 0;
        let mut moves = 1;
        while failures < budget && moves < self.params.max_steps {
            let Some((s, n)) = support else { break };
            if matches!(s, Support::Floor) || (matches!(s, Support::Static(0)) && n.z < -0.999) {
                break;
            }
            let h = DVec3::new(-n.x, -n.y, 0.0);
            let dir = if h.length() > 0.05 && failures == 0 {
                h.normalize()
            } else {
                let a = stream.unit() * std::f64::consts::TAU;
                DVec3::new(a.cos(), a.sin(), 0.0)
            };
            let saved = (self.bodies[i].position, self.boxes[i]);
            let before = self.bodies[i].bottom();
            self.translate(i, DVec3::Z * lift);
            let (t, _) = self.sweep(i, dir, step);
            self.translate(i, dir * t);
            let next = self.drop(i);
            if t > 0.0 && self.bodies[i].bottom() < before - 1e-9 * (1.0 + before.abs()) {
                support = next;
                moves += 1;
                failures = 0;
            } else {
                self.bodies[i].position = saved.0;
                self.boxes[i] = saved.1;
                failures += 1;
            }
        }
        moves
    }

    fn supported(&mut self, i: usize) -> bool {
        let tol = self.params.penetration_tolerance;
        if self.bodies[i].bottom() <= tol {
            return true;
        }
        let pose = self.bodies[i].pose();
        let probe = Aabb::new(self.boxes[i].min - DVec3::Z * tol, self.boxes[i].max).expanded(tol);
        let opts = cast_options(tol, 0.0);
        for (j, b) in self.boxes.iter().enumerate() {
            if j == i || !self.active[j] || !b.overlaps(&probe) {
                continue;
            }
            let o = &self.bodies[j];
            let r = query::cast_shapes(
                &pose,
                DVec3::NEG_Z,
                self.bodies[i].shape(),
                &o.pose(),
                DVec3::ZERO,
                o.shape(),
                opts,
            );
            if matches!(r, Ok(Some(_))) {
                return true;
            }
        }
        self.statics.iter().any(|p| {
            p.aabb.overlaps(&probe)
                && matches!(
                    query::cast_shapes(
                        &pose,
                        DVec3::NEG_Z,
                        self.bodies[i].shape(),
                        &PPose::IDENTITY,
                        DVec3::ZERO,
                        &p.shape,
                        opts
                    ),
                    Ok(Some(_))
                )
        })
    }

    fn penetrating(&self, i: usize) -> bool {
        let tol = self.params.penetration_tolerance;
        let me = &self.bodies[i];
        let bx = self.boxes[i];
        let deep = |c: Result<Option<query::Contact>, _>| matches!(c, Ok(Some(c)) if -c.dist > tol);
        (0..self.bodies.len()).any(|j| {
            j != i && self.active[j] && self.boxes[j].overlaps(&bx) && {
                let o = &self.bodies[j];
                deep(query::contact(&me.pose(), me.shape(), &o.pose(), o.shape(), 0.0))
            }
        }) || self.statics.iter().any(|p| {
            p.aabb.overlaps(&bx) && deep(query::contact(&me.pose(), me.shape(), &PPose::IDENTITY, &p.shape, 0.0))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenetratingPair {
    pub a: u32,
    pub b: u32,
    pub depth: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PenetrationReport {
    pub pairs: Vec<PenetratingPair>,
}

impl PenetrationReport {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// All proxy pairs overlapping by more than `tol`.
pub fn check_interpenetration(proxies: &[CollisionProxy], tol: f64) -> PenetrationReport {
    let boxes: Vec<Aabb> = proxies.iter().map(|p| p.aabb()).collect();
    let mut pairs = Vec::new();
    for i in 0..proxies.len() {
        for j in i + 1..proxies.len() {
            if !boxes[i].overlaps(&boxes[j]) {
                continue;
            }
            let (a, b) = (&proxies[i], &proxies[j]);
            if let Ok(Some(c)) = query::contact(&a.pose(), a.shape(), &b.pose(), b.shape(), 0.0) {
                if -c.dist > tol {
                    pairs.push(PenetratingPair {
                        a: a.id,
                        b: b.id,
                        depth: -c.dist,
                    });
                }
            }
        }
    }
    PenetrationReport { pairs }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettleOutcome {
    pub instances: Vec<InstanceState>,
    /// Total potential energy after seating and after each accepted relaxation.
    pub energy_trace: Vec<f64>,
    /// Ids marked not alive because they could not be brought to rest.
    pub rejected: Vec<u32>,
    pub moves: u64,
}

/// Proxies for instances: the hull of each template at the instance scale.
pub fn build_proxies(instances: &[InstanceState], catalog: &AssetCatalog) -> Vec<CollisionProxy> {
    let mut cache: BTreeMap<usize, ConvexPolyhedron> = BTreeMap::new();
    instances
        .iter()
        .map(|inst| {
            let g = &catalog.templates[inst.template_index].geometry;
            let unit = cache.entry(inst.template_index).or_insert_with(|| {
                ConvexPolyhedron::from_convex_hull(&g.hull_points).expect("template hull is a solid")
            });
            let shape = unit.clone().scaled(DVec3::splat(inst.scale)).expect("positive scale");
            CollisionProxy {
                id: inst.instance_id,
                shape: ProxyShape::Hull(shape),
                position: inst.position,
                rotation: inst.orientation,
            }
        })
        .collect()
}

fn static_pieces(container: Option<&ContainerSpec>) -> Vec<StaticPiece> {
    container
        .map(|c| c.pieces())
        .unwrap_or_default()
        .iter()
        .filter_map(|pts| {
            let shape = ConvexPolyhedron::from_convex_hull(pts)?;
            Some(StaticPiece {
                shape,
                aabb: Aabb::from_points(pts),
            })
        })
        .collect()
}

/// Settles proxies in place; returns (energy trace, rejected indices, moves).
pub fn settle_proxies(
    proxies: &mut Vec<CollisionProxy>,
    container: Option<&ContainerSpec>,
    params: &SettleParams,
    stream: &mut RngStream,
) -> (Vec<f64>, Vec<usize>, u64) {
    let n = proxies.len();
    let mut world = World {
        params,
        statics: static_pieces(container),
        boxes: Vec::with_capacity(n),
        bodies: std::mem::take(proxies),
        active: vec![false; n],
        scratch: Vec::new(),
    };
    for b in &mut world.bodies {
        b.tip_to_stable_face();
    }
    world.boxes = world.bodies.iter().map(|b| b.aabb()).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        world.boxes[a]
            .min
            .z
            .total_cmp(&world.boxes[b].min.z)
            .then(world.bodies[a].id.cmp(&world.bodies[b].id))
    });

    // Seating: stack the objects in order so none starts inside another.
    // Bodies only ever move down afterwards, so the stack stays clear.
    let mut stack_top = world.statics.iter().map(|p| p.aabb.max.z).fold(0.0, f64::max);
    for &i in &order {
        let lift = (stack_top + params.penetration_tolerance - world.boxes[i].min.z).max(0.0);
        world.translate(i, DVec3::Z * lift);
        stack_top = world.boxes[i].max.z;
    }
    let seated_energy: f64 = world.bodies.iter().map(|b| params.gravity * b.position.z).sum();
    let mut trace = vec![seated_energy];
    let mut moves = 0u64;
    let mut energy = seated_energy;
    for &i in &order {
        let z0 = world.bodies[i].position.z;
        world.active[i] = true;
        moves += u64::from(world.relax(i, stream));
        energy += params.gravity * (world.bodies[i].position.z - z0);
        trace.push(energy);
    }

    // Validation: re-drop anything that lost its support, reject what is
    // still unsupported or penetrating, and repeat while rejections happen.
    let mut rejected = Vec::new();
    for round in 0..=5 {
        if round > 0 {
            for &i in &order {
                if world.active[i] && !world.supported(i) {
                    let z0 = world.bodies[i].position.z;
                    moves += u64::from(world.relax(i, stream));
                    energy += params.gravity * (world.bodies[i].position.z - z0);
                    trace.push(energy);
                }
            }
        }
        let bad: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&i| world.active[i] && !(world.supported(i) && !world.penetrating(i)))
            .collect();
        if bad.is_empty() {
            break;
        }
        for i in bad {
            log::warn!("object {} did not come to rest; rejected", world.bodies[i].id);
            world.active[i] = false;
            energy -= params.gravity * world.bodies[i].position.z;
            trace.push(energy);
            rejected.push(i);
        }
        if round == 5 {
            while let Some(i) = order.iter().copied().find(|&i| world.active[i] && !world.supported(i)) {
                world.active[i] = false;
                energy -= params.gravity * world.bodies[i].position.z;
                trace.push(energy);
                rejected.push(i);
            }
        }
    }
    *proxies = world.bodies;
    (trace, rejected, moves)
}

/// Brings instances to rest on the floor, the container and each other.
pub fn settle(
    instances: &[InstanceState],
    catalog: &AssetCatalog,
    container: Option<&ContainerSpec>,
    params: &SettleParams,
    stream: &mut RngStream,
) -> SettleOutcome {
    let mut proxies = build_proxies(instances, catalog);
    let (energy_trace, rejected_idx, moves) = settle_proxies(&mut proxies, container, params, stream);
    let mut out: Vec<InstanceState> = instances.to_vec();
    for (inst, p) in out.iter_mut().zip(&proxies) {
        inst.position = p.position;
        inst.orientation = p.rotation;
    }
    let mut rejected = Vec::new();
    for i in rejected_idx {
        out[i].alive = false;
        rejected.push(out[i].instance_id);
    }
    SettleOutcome {
        instances: out,
        energy_trace,
        rejected,
        moves,
    }
}

#[cfg(test)]
mod tests;
