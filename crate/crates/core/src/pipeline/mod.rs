//! End-to-end scene generation and dataset orchestration.

mod dataset;
mod export;

use std::time::Instant;

use glam::DVec3;

use crate::annotate::{
    annotate_scene, category_id, CameraRecord, ClassDefinition, Diagnostics, ObjectRecord, ObjectStatus,
    SceneAnnotations, SceneRecord, SceneStatus, Seeds, Timings, TransformSummary,
};
use crate::catalog::{split_for_key, AssetCatalog, SplitLabel};
use crate::config::GeneratorConfig;
use crate::geometry::Aabb;
use crate::render::{sample_camera, sample_lighting, CameraSpec, RenderScene};
use crate::rng::derive_stream;
use crate::scene::{place_distractors, sample_scene_plan, spawn_instances, InstanceState, ObjectClassSpec, ScenePlan};
use crate::settle::{build_proxies, check_interpenetration, settle, SettleParams};
use crate::visibility::{filter_scene, FilterOutcome, RemovalReason};

pub use dataset::{
    generate_dataset, generate_dataset_with_catalog, load_manifest, regenerate_scene, summarize, DatasetManifest,
    EntryStatus, GenerateReport, ManifestEntry, Summary,
};
pub use export::{export_scene, scene_dir, scene_relpath};

pub const GENERATOR_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Split of a scene, fixed across retries.
pub fn scene_split(config: &GeneratorConfig, scene_index: u64) -> SplitLabel {
    split_for_key(&format!("scene-{scene_index}"), config.split_ratios)
}

/// Root stream label of attempt `k`.
pub fn attempt_label(attempt: u32) -> String {
    if attempt == 0 {
        "scene".to_owned()
    } else {
        format!("retry-{attempt}")
    }
}

/// Everything produced for one scene, in memory.
#[derive(Debug, Clone)]
pub struct SceneResult {
    pub record: SceneRecord,
    pub plan: Option<ScenePlan>,
    /// Counted classes followed by distractor classes.
    pub classes: Vec<ObjectClassSpec>,
    /// Settled counted instances (alive or not) followed by distractors.
    pub instances: Vec<InstanceState>,
    pub camera: Option<CameraSpec>,
    pub outcome: Option<FilterOutcome>,
    pub annotations: Option<SceneAnnotations>,
}

impl SceneResult {
    pub fn is_ok(&self) -> bool {
        self.record.status == SceneStatus::Ok
    }
}

struct Clock {
    on: bool,
    last: Instant,
}

impl Clock {
    fn new(on: bool) -> Clock {
        Clock {
            on,
            last: Instant::now(),
        }
    }

    fn lap(&mut self) -> f64 {
        if !self.on {
            return 0.0;
        }
        let now = Instant::now();
        let ms = (now - self.last).as_secs_f64() * 1e3;
        self.last = now;
        ms
    }
}

fn seeds(config: &GeneratorConfig, scene_index: u64, attempt: u32) -> Seeds {
    Seeds {
        master_seed: config.master_seed,
        scene_index,
        attempt,
        stream_label: attempt_label(attempt),
    }
}

fn empty_record(config: &GeneratorConfig, scene_index: u64, attempt: u32, reason: String) -> SceneRecord {
    SceneRecord {
        generator_version: GENERATOR_VERSION.to_owned(),
        config_hash: format!("{:016x}", config.content_hash()),
        seeds: seeds(config, scene_index, attempt),
        status: SceneStatus::Discarded,
        split: scene_split(config, scene_index),
        class_definitions: Vec::new(),
        objects: Vec::new(),
        camera: None,
        transforms: None,
        diagnostics: Diagnostics {
            discard_reason: Some(reason),
            ..Diagnostics::default()
        },
        timings: Timings {
            recorded: config.record_timings,
            ..Timings::default()
        },
        prompts: None,
        exemplars: Vec::new(),
        images: None,
    }
}

/// Generates scene `scene_index`, resampling discarded attempts with
/// derived retry streams up to `max_scene_attempts` times.
pub fn generate_scene(catalog: &AssetCatalog, config: &GeneratorConfig, scene_index: u64) -> SceneResult {
    let mut failed = Vec::new();
    let mut last = None;
    for attempt in 0..config.max_scene_attempts {
        let mut r = attempt_scene(catalog, config, scene_index, attempt);
        r.record.diagnostics.failed_attempts = failed.clone();
        if r.is_ok() {
            return r;
        }
        let reason = r.record.diagnostics.discard_reason.clone().unwrap_or_default();
        log::info!("scene {scene_index} attempt {attempt} discarded: {reason}");
        failed.push(format!("attempt {attempt}: {reason}"));
        last = Some(r);
    }
    let mut r = last.expect("at least one attempt");
    r.record.diagnostics.failed_attempts = failed;
    r
}

/// A single attempt, with no retries.
pub fn attempt_scene(catalog: &AssetCatalog, config: &GeneratorConfig, scene_index: u64, attempt: u32) -> SceneResult {
    let mut clock = Clock::new(config.record_timings);
    let split = scene_split(config, scene_index);
    let root = derive_stream(config.master_seed, scene_index, &attempt_label(attempt));
    let discard = |reason: String, plan: Option<ScenePlan>| SceneResult {
        record: empty_record(config, scene_index, attempt, reason),
        plan,
        classes: Vec::new(),
        instances: Vec::new(),
        camera: None,
        outcome: None,
        annotations: None,
    };

    let plan = match sample_scene_plan(catalog, &root.child("plan"), config, split, scene_index) {
        Ok(p) => p,
        Err(e) => return discard(e.to_string(), None),
    };
    let spawned = spawn_instances(&plan, config, &mut root.child("spawn"));
    let plan_ms = clock.lap();

    let params = SettleParams::from_config(config);
    let settled = settle(
        &spawned,
        catalog,
        plan.container.as_ref(),
        &params,
        &mut root.child("settle"),
    );
    let alive: Vec<InstanceState> = settled.instances.iter().filter(|i| i.alive).cloned().collect();
    let max_penetration = check_interpenetration(&build_proxies(&alive, catalog), 0.0)
        .pairs
        .iter()
        .map(|p| p.depth)
        .fold(0.0, f64::max);
    let distractors = place_distractors(
        &plan,
        &settled.instances,
        catalog,
        config,
        &mut root.child("distractors"),
    );
    let settle_ms = clock.lap();
    if alive.is_empty() {
        return discard("no counted object came to rest".to_owned(), Some(plan));
    }

    let bounds = match &plan.container {
        Some(c) => c.aabb,
        None => alive.iter().fold(Aabb::EMPTY, |b, i| b.union(i.hull_aabb(catalog))),
    };
    let centroid = alive.iter().map(|i| i.position).sum::<DVec3>() / alive.len() as f64;
    let camera = sample_camera(&bounds, centroid, &mut root.child("camera"), config);
    let lighting = sample_lighting(&mut root.child("lighting"), config);
    let mut instances = settled.instances.clone();
    instances.extend(distractors.instances.iter().cloned());
    let mut classes = plan.classes.clone();
    classes.extend(distractors.classes.iter().cloned());
    let scene = RenderScene::new(
        catalog,
        Some(&plan.floor),
        plan.container.as_ref(),
        &instances,
        lighting.clone(),
    );
    let render_ms = clock.lap();

    let outcome = filter_scene(&scene, &camera, config);
    let filter_ms = clock.lap();

    let mut record = empty_record(config, scene_index, attempt, String::new());
    record.camera = Some(CameraRecord::new(&camera));
    record.transforms = Some(TransformSummary {
        floor: plan.floor.clone(),
        container: plan.container.clone(),
        lighting: Some(lighting),
        target_count: plan.target_count,
        spawned: spawned.len(),
        settled: alive.len(),
        settle_moves: settled.moves as usize,
        energy_initial: settled.energy_trace.first().copied().unwrap_or(0.0),
        energy_final: settled.energy_trace.last().copied().unwrap_or(0.0),
        distractors_requested: distractors.requested,
        distractors_placed: distractors.instances.len(),
    });
    record.diagnostics = Diagnostics {
        visibility: outcome.records.clone(),
        removals: outcome.removed.clone(),
        filter_iterations: outcome.iterations,
        settle_rejected: settled.rejected.clone(),
        max_penetration,
        distractor_shortfall: distractors.shortfall,
        failed_attempts: Vec::new(),
        discard_reason: None,
    };
    record.timings = Timings {
        recorded: config.record_timings,
        plan_ms,
        settle_ms,
        render_ms,
        filter_ms,
        ..Timings::default()
    };

    let mut result = SceneResult {
        record,
        plan: Some(plan),
        classes,
        instances,
        camera: Some(camera),
        outcome: None,
        annotations: None,
    };
    if outcome.discarded {
        result.record.diagnostics.discard_reason =
            Some("every counted object was removed by the visibility filter".to_owned());
        result.outcome = Some(outcome);
        fill_objects(&mut result);
        return result;
    }
    match annotate_scene(
        scene_index,
        &result.classes,
        &result.instances,
        &outcome,
        config.exemplar_scoring,
    ) {
        Ok(a) => {
            result.record.status = SceneStatus::Ok;
            result.record.prompts = Some(a.prompts.clone());
            result.record.exemplars = a
                .internal_exemplars
                .iter()
                .chain(&a.external_exemplars)
                .cloned()
                .collect();
            result.annotations = Some(a);
        }
        Err(e) => result.record.diagnostics.discard_reason = Some(format!("annotation failed: {e}")),
    }
    result.outcome = Some(outcome);
    fill_objects(&mut result);
    result
}

/// Class definitions and per-object records from the final state.
fn fill_objects(r: &mut SceneResult) {
    let image_id = r.record.seeds.scene_index;
    let ann = r.annotations.as_ref().map(|a| a.annotations.as_slice()).unwrap_or(&[]);
    r.record.class_definitions = r
        .classes
        .iter()
        .map(|c| ClassDefinition {
            class_id: c.class_id,
            category_id: category_id(image_id, c.class_id),
            template_id: c.template_id.clone(),
            category: c.category,
            derivation: c.derivation,
            descriptions: c.descriptions.clone(),
            d_max: c.d_max,
            split: c.split,
            is_distractor: c.is_distractor(),
            count: ann.iter().filter(|a| a.class_id == c.class_id).count(),
        })
        .collect();
    let outcome = r.outcome.as_ref();
    r.record.objects = r
        .instances
        .iter()
        .map(|i| {
            let a = ann.iter().find(|a| a.instance_id == i.instance_id);
            let removal = outcome.and_then(|o| o.removed.iter().find(|x| x.instance_id == i.instance_id));
            let status = if i.is_distractor {
                ObjectStatus::Distractor
            } else if !i.alive {
                ObjectStatus::RejectedBySettle
            } else {
                match removal.map(|x| x.reason) {
                    Some(RemovalReason::OriginOutOfFrame) => ObjectStatus::OriginOutOfFrame,
                    Some(RemovalReason::Occluded) => ObjectStatus::Occluded,
                    None => ObjectStatus::Retained,
                }
            };
            let visibility = outcome
                .and_then(|o| o.record(i.instance_id))
                .or(removal.map(|x| &x.record))
                .map(|v| v.visibility);
            ObjectRecord {
                instance_id: i.instance_id,
                class_id: i.class_id,
                is_distractor: i.is_distractor,
                status,
                position: i.position.to_array(),
                orientation: i.orientation.to_array(),
                scale: i.scale,
                scale_jitter: i.scale_jitter,
                bbox: a.map(|a| a.bbox),
                area: a.map_or(0, |a| a.area),
                visibility,
                exemplar_score: a.and_then(|a| a.exemplar_score),
            }
        })
        .collect();
}

#[cfg(test)]
mod tests;
