//! Occlusion filtering of counted instances.

use serde::{Deserialize, Serialize};

use crate::config::{GeneratorConfig, ThresholdRule};
use crate::error::{Error, Result};
use crate::render::{
    compose, project_origin, retrace_disabled, trace_frame, unoccluded_masks, BitMask, CameraSpec, RenderPasses,
    RenderScene,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityRecord {
    pub instance_id: u32,
    pub area_occluded: usize,
    pub area_unoccluded: usize,
    pub visibility: f64,
    pub occlusion: f64,
    pub origin_in_frame: bool,
}

impl VisibilityRecord {
    pub fn new(instance_id: u32, area_occluded: usize, area_unoccluded: usize, origin_in_frame: bool) -> Self {
        let visibility = if area_unoccluded == 0 {
            0.0
        } else {
            (area_occluded as f64 / area_unoccluded as f64).min(1.0)
        };
        VisibilityRecord {
            instance_id,
            area_occluded,
            area_unoccluded,
            visibility,
            occlusion: 1.0 - visibility,
            origin_in_frame,
        }
    }
}

/// `|M_o| / |M_u|`, or 0 for an empty unoccluded mask.
pub fn visibility_ratio(m_occluded: &BitMask, m_unoccluded: &BitMask) -> Result<f64> {
    if m_occluded.size != m_unoccluded.size {
        return Err(Error::MaskDimensions(m_occluded.size, m_unoccluded.size));
    }
    if m_occluded.iter().any(|(x, y)| !m_unoccluded.get(x, y)) {
        return Err(Error::MaskSubsetViolation { instance: 0 });
    }
    if m_unoccluded.area == 0 {
        return Ok(0.0);
    }
    Ok(m_occluded.area as f64 / m_unoccluded.area as f64)
}

/// True when the record must be removed under `rule`.
pub fn violates(visibility: f64, threshold: f64, rule: ThresholdRule) -> bool {
    match rule {
        ThresholdRule::Occlusion => 1.0 - visibility >= threshold,
        ThresholdRule::Visibility => visibility < threshold,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    OriginOutOfFrame,
    Occluded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub instance_id: u32,
    pub reason: RemovalReason,
    /// Fixpoint iteration, 0 for the frame test.
    pub iteration: usize,
    pub record: VisibilityRecord,
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    /// Counted instances kept, ascending.
    pub retained: Vec<u32>,
    pub distractors: Vec<u32>,
    pub removed: Vec<Removal>,
    pub passes: RenderPasses,
    /// Final records of retained counted instances and distractors.
    pub records: Vec<VisibilityRecord>,
    pub iterations: usize,
    pub discarded: bool,
}

impl FilterOutcome {
    pub fn record(&self, instance_id: u32) -> Option<&VisibilityRecord> {
        self.records.iter().find(|r| r.instance_id == instance_id)
    }
}

/// Removes counted instances whose origin leaves the frame, then removes
/// every violator at once and re-traces until none remain.
pub fn filter_scene(scene: &RenderScene<'_>, camera: &CameraSpec, config: &GeneratorConfig) -> FilterOutcome {
    let threshold = config.visibility_threshold;
    let rule = config.visibility_rule;
    let n_items = scene.items.len();
    let mut enabled = scene.all_enabled();
    let mut removed = Vec::new();
    let counted = |k: usize| scene.items[k].instance_id != 0 && !scene.items[k].is_distractor;

    let mut in_frame = vec![true; n_items];
    for k in (0..n_items).filter(|&k| counted(k)) {
        if project_origin(camera, scene.items[k].pose.position).is_none() {
            in_frame[k] = false;
            enabled[k] = false;
            removed.push(Removal {
                instance_id: scene.items[k].instance_id,
                reason: RemovalReason::OriginOutOfFrame,
                iteration: 0,
                record: VisibilityRecord::new(scene.items[k].instance_id, 0, 0, false),
            });
        }
    }

    let unoccluded = unoccluded_masks(scene, camera, &enabled);
    let unocc_area = |k: usize| unoccluded.get(&scene.items[k].instance_id).map_or(0, |m| m.area);
    let mut frame = trace_frame(scene, camera, &enabled);
    let mut iterations = 0;
    loop {
        let areas = frame.item_areas(n_items);
        let violators: Vec<usize> = (0..n_items)
            .filter(|&k| enabled[k] && counted(k))
            .filter(|&k| {
                let r = VisibilityRecord::new(scene.items[k].instance_id, areas[k], unocc_area(k), true);
                violates(r.visibility, threshold, rule)
            })
            .collect();
        if violators.is_empty() {
            break;
        }
        iterations += 1;
        for &k in &violators {
            enabled[k] = false;
            removed.push(Removal {
                instance_id: scene.items[k].instance_id,
                reason: RemovalReason::Occluded,
                iteration: iterations,
                record: VisibilityRecord::new(scene.items[k].instance_id, areas[k], unocc_area(k), true),
            });
        }
        retrace_disabled(scene, camera, &enabled, &mut frame);
    }

    let mut passes = compose(scene, camera, &frame, &enabled, config.rgb_supersample);
    let areas = frame.item_areas(n_items);
    let mut retained = Vec::new();
    let mut distractors = Vec::new();
    let mut records = Vec::new();
    for k in (0..n_items).filter(|&k| enabled[k] && scene.items[k].instance_id != 0) {
        let id = scene.items[k].instance_id;
        if scene.items[k].is_distractor {
            distractors.push(id);
        } else {
            retained.push(id);
        }
        records.push(VisibilityRecord::new(id, areas[k], unocc_area(k), in_frame[k]));
    }
    passes.unoccluded = unoccluded
        .into_iter()
        .filter(|(id, _)| records.iter().any(|r| r.instance_id == *id))
        .collect();
    retained.sort_unstable();
    distractors.sort_unstable();
    records.sort_by_key(|r| r.instance_id);
    FilterOutcome {
        discarded: retained.is_empty(),
        retained,
        distractors,
        removed,
        passes,
        records,
        iterations,
    }
}

/// Recomputes the visibility of every retained instance from the final
/// passes alone.
pub fn assert_visibility_guarantee(
    passes: &RenderPasses,
    retained: &[u32],
    threshold: f64,
    rule: ThresholdRule,
) -> bool {
    retained.iter().all(|&id| {
        let Some(unocc) = passes.unoccluded.get(&id) else {
            return false;
        };
        let occ = passes.occluded_mask(id);
        match visibility_ratio(&occ, unocc) {
            Ok(v) => !violates(v, threshold, rule),
            Err(_) => false,
        }
    })
}
