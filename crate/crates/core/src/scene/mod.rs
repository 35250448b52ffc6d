//! Scene plans: environment, counted classes, spawn states and distractors.

mod environment;

use std::collections::BTreeSet;

use glam::{DQuat, DVec3};
use serde::{Deserialize, Serialize};

use crate::catalog::{AssetCatalog, Category, DescriptionTriple, SplitLabel};
use crate::config::GeneratorConfig;
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Pose};
use crate::rng::RngStream;

pub use environment::{ContainerKind, ContainerSpec, FloorPattern, FloorShape, FloorSpec};

/// First class id used for distractors; each distractor is its own class.
pub const DISTRACTOR_CLASS_BASE: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivationKind {
    Resized,
    SameCategory,
    OtherCategory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Derivation {
    Base,
    Resized { of: u32, factor: f64, larger: bool },
    SameCategory { of: u32 },
    OtherCategory { of: u32 },
    Distractor,
}

impl Derivation {
    pub fn kind(&self) -> Option<DerivationKind> {
        match self {
            Derivation::Resized { .. } => Some(DerivationKind::Resized),
            Derivation::SameCategory { .. } => Some(DerivationKind::SameCategory),
            Derivation::OtherCategory { .. } => Some(DerivationKind::OtherCategory),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectClassSpec {
    pub class_id: u32,
    pub template_index: usize,
    pub template_id: String,
    pub category: Category,
    /// Max AABB extent after scaling, world units.
    pub d_max: f64,
    pub derivation: Derivation,
    pub descriptions: DescriptionTriple,
    pub split: SplitLabel,
}

impl ObjectClassSpec {
    pub fn is_distractor(&self) -> bool {
        matches!(self.derivation, Derivation::Distractor)
    }

    fn from_template(
        catalog: &AssetCatalog,
        template_index: usize,
        class_id: u32,
        d_max: f64,
        derivation: Derivation,
    ) -> ObjectClassSpec {
        let t = &catalog.templates[template_index];
        ObjectClassSpec {
            class_id,
            template_index,
            template_id: t.template_id.clone(),
            category: t.category,
            d_max,
            derivation,
            descriptions: t.descriptions.clone(),
            split: t.split,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePlan {
    pub scene_index: u64,
    pub split: SplitLabel,
    pub floor: FloorSpec,
    pub container: Option<ContainerSpec>,
    pub classes: Vec<ObjectClassSpec>,
    pub target_count: usize,
    pub distractor_count: usize,
}

impl ScenePlan {
    pub fn class(&self, class_id: u32) -> Option<&ObjectClassSpec> {
        self.classes.iter().find(|c| c.class_id == class_id)
    }

    pub fn counted_categories(&self) -> BTreeSet<Category> {
        self.classes.iter().map(|c| c.category).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceState {
    pub instance_id: u32,
    pub class_id: u32,
    pub is_distractor: bool,
    pub template_index: usize,
    pub position: DVec3,
    pub orientation: DQuat,
    pub scale_jitter: f64,
    /// World scale of the unit-extent template mesh.
    pub scale: f64,
    pub alive: bool,
}

impl InstanceState {
    pub fn pose(&self) -> Pose {
        Pose {
            position: self.position,
            rotation: self.orientation,
            scale: self.scale,
        }
    }

    /// World AABB of the instance's collision hull.
    pub fn hull_aabb(&self, catalog: &AssetCatalog) -> Aabb {
        self.pose()
            .bound_points(&catalog.templates[self.template_index].geometry.hull_points)
    }
}

/// Template indices of `split` not yet used by `used`.
fn free_templates(
    catalog: &AssetCatalog,
    split: SplitLabel,
    used: &BTreeSet<usize>,
    keep: impl Fn(Category) -> bool,
) -> Vec<usize> {
    (0..catalog.len())
        .filter(|i| !used.contains(i))
        .filter(|&i| catalog.templates[i].split == split && keep(catalog.templates[i].category))
        .collect()
}

/// Resized copy of `base` with its descriptions prefixed "Larger"/"Smaller".
pub fn resized_variant(base: &ObjectClassSpec, class_id: u32, factor: f64, larger: bool) -> ObjectClassSpec {
    let (d_max, word) = if larger {
        (base.d_max * factor, "Larger")
    } else {
        (base.d_max / factor, "Smaller")
    };
    ObjectClassSpec {
        class_id,
        d_max,
        derivation: Derivation::Resized {
            of: base.class_id,
            factor,
            larger,
        },
        descriptions: base.descriptions.prefixed(word),
        ..base.clone()
    }
}

/// Context for deriving a class inside one plan.
pub struct VariantContext<'a> {
    pub catalog: &'a AssetCatalog,
    pub config: &'a GeneratorConfig,
    pub split: SplitLabel,
    /// Classes already in the plan.
    pub existing: &'a [ObjectClassSpec],
}

impl VariantContext<'_> {
    fn used_templates(&self) -> BTreeSet<usize> {
        self.existing.iter().map(|c| c.template_index).collect()
    }

    fn resize_taken(&self, base: u32, larger: bool) -> bool {
        self.existing
            .iter()
            .any(|c| matches!(c.derivation, Derivation::Resized { of, larger: l, .. } if of == base && l == larger))
    }
}

/// Derives a new class from `base`, choosing the derivation by the
/// configured probabilities. Exhausted options fall through the order
/// resized, same-category, other-category, any unused template.
pub fn build_class_variants(
    base: &ObjectClassSpec,
    ctx: &VariantContext<'_>,
    class_id: u32,
    stream: &mut RngStream,
) -> Result<ObjectClassSpec> {
    let kind = match stream.weighted(&ctx.config.derivation_probabilities) {
        0 => DerivationKind::Resized,
        1 => DerivationKind::SameCategory,
        _ => DerivationKind::OtherCategory,
    };
    build_class_variant_of_kind(base, ctx, class_id, kind, stream)
}

pub fn build_class_variant_of_kind(
    base: &ObjectClassSpec,
    ctx: &VariantContext<'_>,
    class_id: u32,
    kind: DerivationKind,
    stream: &mut RngStream,
) -> Result<ObjectClassSpec> {
    let [lo, hi] = ctx.config.scaled_range(ctx.config.target_size_range);
    let [f_lo, f_hi] = ctx.config.size_variant_factor_range;
    let used = ctx.used_templates();

    if kind == DerivationKind::Resized
        && matches!(
            base.derivation,
            Derivation::Base | Derivation::SameCategory { .. } | Derivation::OtherCategory { .. }
        )
    {
        let mut options = Vec::new();
        for larger in [true, false] {
            if ctx.resize_taken(base.class_id, larger) {
                continue;
            }
            let room = if larger { hi / base.d_max } else { base.d_max / lo };
            let top = f_hi.min(room);
            if top >= f_lo {
                options.push((larger, top));
            }
        }
        if !options.is_empty() {
            let (larger, top) = options[stream.index(options.len())];
            let factor = stream.uniform(f_lo, top)?;
            return Ok(resized_variant(base, class_id, factor, larger));
        }
    }
    let fresh_size = |s: &mut RngStream| s.uniform(lo, hi);
    if matches!(kind, DerivationKind::Resized | DerivationKind::SameCategory) {
        let pool = free_templates(ctx.catalog, ctx.split, &used, |c| c == base.category);
        if !pool.is_empty() {
            let t = pool[stream.index(pool.len())];
            let d = fresh_size(stream)?;
            return Ok(ObjectClassSpec::from_template(
                ctx.catalog,
                t,
                class_id,
                d,
                Derivation::SameCategory { of: base.class_id },
            ));
        }
    }
    let mut pool = free_templates(ctx.catalog, ctx.split, &used, |c| c != base.category);
    if pool.is_empty() {
        pool = free_templates(ctx.catalog, ctx.split, &used, |_| true);
    }
    if pool.is_empty() {
        return Err(Error::InsufficientCatalog {
            split: ctx.split.to_string(),
            available: ctx.existing.len(),
            needed: ctx.existing.len() + 1,
        });
    }
    let t = pool[stream.index(pool.len())];
    let d = fresh_size(stream)?;
    Ok(ObjectClassSpec::from_template(
        ctx.catalog,
        t,
        class_id,
        d,
        Derivation::OtherCategory { of: base.class_id },
    ))
}

/// Samples everything about a scene that precedes simulation.
pub fn sample_scene_plan(
    catalog: &AssetCatalog,
    stream: &RngStream,
    config: &GeneratorConfig,
    split: SplitLabel,
    scene_index: u64,
) -> Result<ScenePlan> {
    let members = catalog.split_members(split);
    let mut counts = stream.child("counts");
    let target_count = counts.int(config.count_range[0], config.count_range[1])? as usize;
    let n_classes = counts.int(config.class_count_range[0], config.class_count_range[1])? as usize;
    let distractor_count = counts.int(config.distractor_count_range[0], config.distractor_count_range[1])? as usize;
    if members.len() < n_classes {
        return Err(Error::InsufficientCatalog {
            split: split.to_string(),
            available: members.len(),
            needed: n_classes,
        });
    }

    let floor = FloorSpec::sample(
        &mut stream.child("floor"),
        config.scene_scale,
        config.floor_half_extent_range,
        config.floor_uv_scale_range,
    );
    let mut cs = stream.child("container");
    let container = cs.bernoulli(config.container_probability).then(|| {
        ContainerSpec::sample(
            &mut cs,
            config.scene_scale,
            config.container_half_extent_range,
            config.container_height_range,
        )
    });

    let mut s = stream.child("classes");
    let [lo, hi] = config.scaled_range(config.target_size_range);
    let first = members[s.index(members.len())];
    let d = s.uniform(lo, hi)?;
    let mut classes = vec![ObjectClassSpec::from_template(catalog, first, 1, d, Derivation::Base)];
    while classes.len() < n_classes {
        let base = classes[s.index(classes.len())].clone();
        let ctx = VariantContext {
            catalog,
            config,
            split,
            existing: &classes,
        };
        let id = classes.len() as u32 + 1;
        let c = build_class_variants(&base, &ctx, id, &mut s)?;
        classes.push(c);
    }

    Ok(ScenePlan {
        scene_index,
        split,
        floor,
        container,
        classes,
        target_count,
        distractor_count,
    })
}

/// Spawn states for the counted objects, above the container or the
/// global range. Ids run from 1.
pub fn spawn_instances(plan: &ScenePlan, config: &GeneratorConfig, stream: &mut RngStream) -> Vec<InstanceState> {
    let s = config.scene_scale;
    let margin = config.scaled(config.spawn_margin);
    let [z_lo, z_hi] = config.scaled_range(config.spawn_height_range);
    let [xy_lo, xy_hi] = config.scaled_range(config.spawn_xy_range);
    (0..plan.target_count)
        .map(|k| {
            let class = &plan.classes[stream.index(plan.classes.len())];
            let (x, y) = match &plan.container {
                Some(c) => {
                    let [ax, ay] = c.spawn_ellipse(margin);
                    let r = stream.unit().sqrt();
                    let th = stream.unit() * std::f64::consts::TAU;
                    let center = c.aabb.center();
                    (center.x + ax * r * th.cos(), center.y + ay * r * th.sin())
                }
                None => (stream.range([xy_lo, xy_hi]), stream.range([xy_lo, xy_hi])),
            };
            let z = stream.range([z_lo, z_hi]);
            let orientation = stream.rotation();
            let gamma = stream.range(config.scale_jitter_range);
            debug_assert!(s > 0.0);
            InstanceState {
                instance_id: k as u32 + 1,
                class_id: class.class_id,
                is_distractor: false,
                template_index: class.template_index,
                position: DVec3::new(x, y, z),
                orientation,
                scale_jitter: gamma,
                scale: class.d_max * gamma,
                alive: true,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistractorPlacement {
    pub classes: Vec<ObjectClassSpec>,
    pub instances: Vec<InstanceState>,
    pub requested: usize,
    pub shortfall: usize,
}

/// Places the plan's distractors on the floor around the counted objects.
///
/// Each distractor uses a distinct eligible template whose category differs
/// from every counted class. Candidate AABBs, grown by the margin, must not
/// overlap the container, any alive counted object or earlier distractors.
pub fn place_distractors(
    plan: &ScenePlan,
    settled: &[InstanceState],
    catalog: &AssetCatalog,
    config: &GeneratorConfig,
    stream: &mut RngStream,
) -> DistractorPlacement {
    let counted = plan.counted_categories();
    let mut used: BTreeSet<usize> = plan.classes.iter().map(|c| c.template_index).collect();
    let margin = config.scaled(config.distractor_margin);
    let region = config.scaled(config.distractor_region);
    let base = config.scaled(config.distractor_base_size);
    let lift = config.scaled(config.penetration_tolerance) * 0.25;

    let mut blockers: Vec<Aabb> = settled
        .iter()
        .filter(|i| i.alive)
        .map(|i| i.hull_aabb(catalog))
        .collect();
    if let Some(c) = &plan.container {
        blockers.push(c.aabb);
    }
    let mut out = DistractorPlacement {
        classes: Vec::new(),
        instances: Vec::new(),
        requested: plan.distractor_count,
        shortfall: 0,
    };
    let first_id = settled.iter().map(|i| i.instance_id).max().unwrap_or(0) + 1;

    for k in 0..plan.distractor_count {
        let pool: Vec<usize> = free_templates(catalog, plan.split, &used, |c| !counted.contains(&c))
            .into_iter()
            .filter(|&i| catalog.templates[i].is_distractor_eligible)
            .collect();
        if pool.is_empty() {
            out.shortfall += plan.distractor_count - k;
            break;
        }
        let t = pool[stream.index(pool.len())];
        used.insert(t);
        let lambda = stream.range(config.distractor_size_multiplier_range);
        let d_max = base * lambda;
        let hull = &catalog.templates[t].geometry.hull_points;

        let mut placed = None;
        for _ in 0..config.distractor_attempts {
            let yaw = stream.unit() * std::f64::consts::TAU;
            let x = stream.range([-region, region]);
            let y = stream.range([-region, region]);
            let mut pose = Pose {
                position: DVec3::new(x, y, 0.0),
                rotation: DQuat::from_rotation_z(yaw),
                scale: d_max,
            };
            let b = pose.bound_points(hull);
            pose.position.z = lift - b.min.z;
            let b = pose.bound_points(hull);
            let grown = b.expanded(margin);
            if !plan.floor.contains_xy(b.min.x, b.min.y) || !plan.floor.contains_xy(b.max.x, b.max.y) {
                continue;
            }
            if blockers.iter().any(|o| o.overlaps(&grown)) {
                continue;
            }
            placed = Some((pose, b));
            break;
        }
        let Some((pose, b)) = placed else {
            out.shortfall += 1;
            continue;
        };
        blockers.push(b);
        let class_id = DISTRACTOR_CLASS_BASE + out.classes.len() as u32;
        out.classes.push(ObjectClassSpec::from_template(
            catalog,
            t,
            class_id,
            d_max,
            Derivation::Distractor,
        ));
        out.instances.push(InstanceState {
            instance_id: first_id + out.instances.len() as u32,
            class_id,
            is_distractor: true,
            template_index: t,
            position: pose.position,
            orientation: pose.rotation,
            scale_jitter: 1.0,
            scale: d_max,
            alive: true,
        });
    }
    out
}

#[cfg(test)]
mod tests;
