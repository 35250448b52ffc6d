use std::sync::OnceLock;

use super::*;
use crate::catalog::build_catalog_sized;
use crate::rng::derive_stream;

fn catalog() -> &'static AssetCatalog {
    static CAT: OnceLock<AssetCatalog> = OnceLock::new();
    CAT.get_or_init(|| build_catalog_sized(3, 600, GeneratorConfig::default().split_ratios))
}

fn plan(config: &GeneratorConfig, index: u64, split: SplitLabel) -> ScenePlan {
    sample_scene_plan(
        catalog(),
        &derive_stream(config.master_seed, index, "plan"),
        config,
        split,
        index,
    )
    .unwrap()
}

#[test]
fn plan_ranges_hold() {
    let config = GeneratorConfig::default();
    let mut class_counts = [0usize; 5];
    let (mut lo, mut hi) = (usize::MAX, 0);
    for i in 0..2000 {
        let p = plan(&config, i, SplitLabel::Train);
        assert!((30..=200).contains(&p.target_count));
        assert!((2..=8).contains(&p.distractor_count));
        class_counts[p.classes.len()] += 1;
        lo = lo.min(p.target_count);
        hi = hi.max(p.target_count);
        let sizes = config.scaled_range(config.target_size_range);
        for c in &p.classes {
            assert!(c.d_max >= sizes[0] - 1e-12 && c.d_max <= sizes[1] + 1e-12);
            assert_eq!(c.split, SplitLabel::Train);
        }
        let shorts: BTreeSet<_> = p.classes.iter().map(|c| c.descriptions.short.clone()).collect();
        assert_eq!(shorts.len(), p.classes.len());
        let u = (0.04..=0.1).contains(&p.floor.uv_scale);
        assert!(u);
    }
    assert_eq!(class_counts[0] + class_counts[1], 0);
    assert!(class_counts[2] > 0 && class_counts[3] > 0 && class_counts[4] > 0);
    assert!(lo < 40 && hi > 190);
}

#[test]
fn degenerate_count_ranges() {
    let config = GeneratorConfig {
        count_range: [5, 5],
        class_count_range: [2, 2],
        ..GeneratorConfig::default()
    };
    for i in 0..50 {
        let p = plan(&config, i, SplitLabel::Train);
        assert_eq!(p.target_count, 5);
        assert_eq!(p.classes.len(), 2);
    }
}

#[test]
fn test_split_plans_avoid_train_templates() {
    let config = GeneratorConfig::default();
    let manifest = catalog().manifest();
    let train: BTreeSet<&str> = manifest
        .iter()
        .filter(|e| e.split == SplitLabel::Train)
        .map(|e| e.template_id.as_str())
        .collect();
    for i in 0..200 {
        let p = plan(&config, i, SplitLabel::Test);
        for c in &p.classes {
            assert!(!train.contains(c.template_id.as_str()));
        }
    }
}

#[test]
fn resized_description_is_prefixed() {
    let idx = catalog()
        .templates
        .iter()
        .position(|t| t.descriptions.short == "red ball")
        .expect("catalog has a red ball");
    let base = ObjectClassSpec::from_template(catalog(), idx, 1, 0.6, Derivation::Base);
    let v = resized_variant(&base, 2, 1.5, true);
    assert_eq!(v.descriptions.short, "Larger red ball");
    assert!((v.d_max - 0.9).abs() < 1e-12);
    let w = resized_variant(&base, 3, 1.5, false);
    assert_eq!(w.descriptions.short, "Smaller red ball");
}

#[test]
fn derivation_frequencies_match_configuration() {
    let config = GeneratorConfig::default();
    let cat = catalog();
    let mut s = derive_stream(11, 0, "variants");
    let mut hits = [0usize; 3];
    let n = 10_000;
    let [lo, hi] = config.scaled_range(config.target_size_range);
    for k in 0..n {
        let t = cat.split_members(SplitLabel::Train)[k % 50];
        let d = lo + (hi - lo) * 0.5;
        let base = ObjectClassSpec::from_template(cat, t, 1, d, Derivation::Base);
        let existing = [base.clone()];
        let ctx = VariantContext {
            catalog: cat,
            config: &config,
            split: SplitLabel::Train,
            existing: &existing,
        };
        let v = build_class_variants(&base, &ctx, 2, &mut s).unwrap();
        let i = match v.derivation.kind().unwrap() {
            DerivationKind::Resized => 0,
            DerivationKind::SameCategory => 1,
            DerivationKind::OtherCategory => 2,
        };
        hits[i] += 1;
        assert_ne!(v.descriptions, base.descriptions);
        if let Derivation::Resized { factor, .. } = v.derivation {
            assert!(!(0.9..=1.1).contains(&factor));
            assert!(v.d_max >= lo && v.d_max <= hi);
        } else {
            assert_ne!(v.template_index, base.template_index);
        }
    }
    for (h, p) in hits.iter().zip(config.derivation_probabilities) {
        let f = *h as f64 / n as f64;
        assert!((f - p).abs() <= 0.02, "{f} vs {p}");
    }
}

#[test]
fn exhausted_category_falls_back() {
    let config = GeneratorConfig::default();
    let cat = build_catalog_sized(5, 12, [1.0, 0.0, 0.0]);
    let base = ObjectClassSpec::from_template(&cat, 0, 1, 0.6, Derivation::Base);
    let existing = [base.clone()];
    let ctx = VariantContext {
        catalog: &cat,
        config: &config,
        split: SplitLabel::Train,
        existing: &existing,
    };
    let mut s = derive_stream(0, 0, "fallback");
    let v = build_class_variant_of_kind(&base, &ctx, 2, DerivationKind::SameCategory, &mut s).unwrap();
    assert_ne!(v.template_index, base.template_index);
    assert!(matches!(v.derivation, Derivation::OtherCategory { of: 1 }));
}

#[test]
fn insufficient_split_is_an_error() {
    let config = GeneratorConfig::default();
    let cat = build_catalog_sized(5, 12, [1.0, 0.0, 0.0]);
    let r = sample_scene_plan(&cat, &derive_stream(0, 0, "plan"), &config, SplitLabel::Test, 0);
    assert!(matches!(r, Err(Error::InsufficientCatalog { .. })));
}

fn with_container(half: f64) -> ScenePlan {
    let config = GeneratorConfig::default();
    let mut p = plan(&config, 0, SplitLabel::Train);
    let mut s = derive_stream(0, 0, "c");
    let mut c = ContainerSpec::sample(&mut s, 10.0, [0.25, 0.4], [0.02, 0.05]);
    c.half_extents.x = half;
    c.half_extents.y = half;
    c.aabb = Aabb::new(DVec3::new(-half, -half, 0.0), DVec3::new(half, half, c.half_extents.z));
    p.container = Some(c);
    p
}

#[test]
fn spawn_inside_shrunk_ellipse() {
    let config = GeneratorConfig {
        spawn_margin: 0.04,
        ..GeneratorConfig::default()
    };
    let p = with_container(1.0);
    let mut s = derive_stream(0, 0, "spawn");
    let inst = spawn_instances(&p, &config, &mut s);
    assert_eq!(inst.len(), p.target_count);
    for i in &inst {
        let (x, y) = (i.position.x / 0.6, i.position.y / 0.6);
        assert!(x * x + y * y <= 1.0 + 1e-12);
        assert!((1.0..=15.0).contains(&i.position.z));
        assert!((0.98..=1.02).contains(&i.scale_jitter));
        assert!(p.class(i.class_id).is_some());
    }
}

#[test]
fn spawn_without_container_uses_global_range() {
    let config = GeneratorConfig::default();
    let mut p = plan(&config, 1, SplitLabel::Train);
    p.container = None;
    let inst = spawn_instances(&p, &config, &mut derive_stream(0, 1, "spawn"));
    assert!(inst
        .iter()
        .all(|i| i.position.x.abs() <= 3.0 && i.position.y.abs() <= 3.0));
    p.target_count = 1;
    let inst = spawn_instances(&p, &config, &mut derive_stream(0, 1, "spawn"));
    assert_eq!(inst.len(), 1);
    assert_eq!(inst[0].instance_id, 1);
    assert!((1.0..=15.0).contains(&inst[0].position.z));
}

#[test]
fn distractors_avoid_counted_categories_and_each_other() {
    let config = GeneratorConfig::default();
    let cat = catalog();
    let mut dist_counts = [0usize; 9];
    for i in 0..300 {
        let p = plan(&config, i, SplitLabel::Train);
        dist_counts[p.distractor_count] += 1;
        let inst = spawn_instances(&p, &config, &mut derive_stream(0, i, "spawn"));
        let d = place_distractors(&p, &inst, cat, &config, &mut derive_stream(0, i, "distractors"));
        assert_eq!(d.instances.len() + d.shortfall, p.distractor_count);
        let counted = p.counted_categories();
        let margin = config.scaled(config.distractor_margin);
        let boxes: Vec<Aabb> = d.instances.iter().map(|x| x.hull_aabb(cat)).collect();
        for (k, x) in d.instances.iter().enumerate() {
            assert!(!counted.contains(&cat.templates[x.template_index].category));
            assert!(x.is_distractor && x.instance_id as usize > p.target_count);
            assert!(boxes[k].min.z >= 0.0);
            for b in &boxes[..k] {
                assert!(!b.overlaps(&boxes[k].expanded(margin)));
            }
            if let Some(c) = &p.container {
                assert!(!c.aabb.overlaps(&boxes[k]));
            }
        }
        let templates: BTreeSet<_> = d.instances.iter().map(|x| x.template_index).collect();
        assert_eq!(templates.len(), d.instances.len());
    }
    assert!(dist_counts[2..].iter().all(|&c| c > 0));
}

#[test]
fn crowded_floor_records_shortfall() {
    let config = GeneratorConfig {
        distractor_attempts: 5,
        ..GeneratorConfig::default()
    };
    let mut p = with_container(9.5);
    p.distractor_count = 8;
    let d = place_distractors(&p, &[], catalog(), &config, &mut derive_stream(0, 0, "d"));
    assert_eq!(d.instances.len(), 0);
    assert_eq!(d.shortfall, 8);
}
