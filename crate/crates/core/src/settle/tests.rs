use std::sync::OnceLock;

use super::*;
use crate::catalog::{build_catalog_sized, SplitLabel};
use crate::rng::derive_stream;
use crate::scene::{sample_scene_plan, spawn_instances};

fn params() -> SettleParams {
    SettleParams::from_config(&GeneratorConfig::default())
}

fn catalog() -> &'static AssetCatalog {
    static CAT: OnceLock<AssetCatalog> = OnceLock::new();
    CAT.get_or_init(|| build_catalog_sized(9, 240, [1.0, 0.0, 0.0]))
}

#[test]
fn sphere_rests_on_floor() {
    let p = params();
    let mut proxies = vec![CollisionProxy::sphere(1, 0.5, DVec3::new(0.3, -0.2, 10.0))];
    let (trace, rejected, _) = settle_proxies(&mut proxies, None, &p, &mut derive_stream(0, 0, "s"));
    assert!(rejected.is_empty());
    assert!((proxies[0].position.z - 0.5).abs() <= p.penetration_tolerance);
    assert!(trace.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn stacked_spheres_do_not_overlap() {
    let p = params();
    let mut proxies = vec![
        CollisionProxy::sphere(1, 0.5, DVec3::new(0.0, 0.0, 4.0)),
        CollisionProxy::sphere(2, 0.5, DVec3::new(0.0, 0.0, 8.0)),
    ];
    settle_proxies(&mut proxies, None, &p, &mut derive_stream(0, 0, "s"));
    let d = proxies[0].position.distance(proxies[1].position);
    assert!(d >= 1.0 - p.penetration_tolerance, "separation {d}");
    // The upper sphere slides off the lower one onto the floor.
    assert!(proxies
        .iter()
        .all(|s| (s.position.z - 0.5).abs() <= p.penetration_tolerance));
}

#[test]
fn empty_input() {
    let out = settle(&[], catalog(), None, &params(), &mut derive_stream(0, 0, "s"));
    assert!(out.instances.is_empty() && out.rejected.is_empty());
}

#[test]
fn coincident_proxies_are_reported() {
    let a = CollisionProxy::sphere(1, 0.5, DVec3::new(0.0, 0.0, 1.0));
    let b = CollisionProxy::sphere(2, 0.5, DVec3::new(0.0, 0.0, 1.0));
    let r = check_interpenetration(&[a.clone(), b], 0.01);
    assert_eq!(r.pairs.len(), 1);
    assert!((r.pairs[0].depth - 1.0).abs() < 1e-6);
    assert!(check_interpenetration(&[a], 0.01).is_empty());
}

fn settled_scene(index: u64, with_container: bool) -> (Vec<InstanceState>, SettleOutcome, Option<ContainerSpec>) {
    let config = GeneratorConfig::default();
    let mut plan = sample_scene_plan(
        catalog(),
        &derive_stream(1, index, "plan"),
        &config,
        SplitLabel::Train,
        index,
    )
    .unwrap();
    if !with_container {
        plan.container = None;
    }
    plan.target_count = plan.target_count.min(80);
    let inst = spawn_instances(&plan, &config, &mut derive_stream(1, index, "spawn"));
    let out = settle(
        &inst,
        catalog(),
        plan.container.as_ref(),
        &params(),
        &mut derive_stream(1, index, "settle"),
    );
    (inst, out, plan.container)
}

#[test]
fn settled_scenes_meet_the_rest_contract() {
    let p = params();
    for index in 0..4 {
        let (spawned, out, container) = settled_scene(index, index % 2 == 0);
        let alive: Vec<InstanceState> = out.instances.iter().filter(|i| i.alive).cloned().collect();
        assert!(alive.len() + out.rejected.len() == spawned.len());
        let proxies = build_proxies(&alive, catalog());
        assert!(check_interpenetration(&proxies, p.penetration_tolerance).is_empty());
        assert!(out.energy_trace.windows(2).all(|w| w[1] <= w[0] + 1e-9));

        // Support: each proxy touches the floor, the container or another proxy.
        let mut world = World {
            params: &p,
            statics: static_pieces(container.as_ref()),
            boxes: proxies.iter().map(|b| b.aabb()).collect(),
            active: vec![true; proxies.len()],
            bodies: proxies,
            scratch: Vec::new(),
        };
        for i in 0..world.bodies.len() {
            assert!(world.bodies[i].bottom() >= -1e-9);
            assert!(world.supported(i), "object {i} floats");
        }
        for (a, b) in spawned.iter().zip(&out.instances) {
            assert_eq!(a.scale, b.scale);
            assert_eq!(a.instance_id, b.instance_id);
        }
    }
}

#[test]
fn settle_is_deterministic() {
    let (_, a, _) = settled_scene(7, true);
    let (_, b, _) = settled_scene(7, true);
    assert_eq!(a, b);
}

#[test]
fn hull_proxy_within_budget() {
    for t in catalog().templates.iter().take(24) {
        let g = &t.geometry;
        let p = CollisionProxy::hull(0, &g.hull_points, DVec3::ZERO, DQuat::IDENTITY).unwrap();
        assert!(p.volume() <= 1.2 * g.aabb.volume());
        assert!(g
            .mesh
            .positions
            .iter()
            .all(|v| g.hull_points.iter().any(|h| h.distance(*v) < 1e-9) || {
                let b = Aabb::from_points(&g.hull_points);
                b.expanded(1e-9).overlaps(&Aabb::new(*v, *v))
            }));
    }
}
