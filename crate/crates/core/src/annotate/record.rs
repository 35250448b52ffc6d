//! Per-scene metadata document.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BBox, ExemplarRecord, PromptSet};
use crate::catalog::{Category, DescriptionTriple, SplitLabel};
use crate::error::{IoContext, Result};
use crate::render::{CameraSpec, Lighting};
use crate::scene::{ContainerSpec, Derivation, FloorSpec};
use crate::visibility::{Removal, VisibilityRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneStatus {
    Ok,
    Discarded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub master_seed: u64,
    pub scene_index: u64,
    /// 0 for the first attempt.
    pub attempt: u32,
    pub stream_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDefinition {
    pub class_id: u32,
    pub category_id: u64,
    pub template_id: String,
    pub category: Category,
    pub derivation: Derivation,
    pub descriptions: DescriptionTriple,
    pub d_max: f64,
    pub split: SplitLabel,
    pub is_distractor: bool,
    /// Annotated instances in the final image.
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectStatus {
    Retained,
    Distractor,
    RejectedBySettle,
    OriginOutOfFrame,
    Occluded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub instance_id: u32,
    pub class_id: u32,
    pub is_distractor: bool,
    pub status: ObjectStatus,
    pub position: [f64; 3],
    /// `[x, y, z, w]`
    pub orientation: [f64; 4],
    pub scale: f64,
    pub scale_jitter: f64,
    pub bbox: Option<BBox>,
    pub area: u64,
    pub visibility: Option<f64>,
    pub exemplar_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    #[serde(flatten)]
    pub spec: CameraSpec,
    pub intrinsics: Intrinsics,
    pub forward: [f64; 3],
    pub right: [f64; 3],
    pub up: [f64; 3],
}

impl CameraRecord {
    pub fn new(spec: &CameraSpec) -> CameraRecord {
        let b = spec.basis();
        let n = spec.resolution as f64;
        let f = n / 2.0 / (spec.vertical_fov / 2.0).tan();
        CameraRecord {
            spec: spec.clone(),
            intrinsics: Intrinsics {
                fx: f,
                fy: f,
                cx: n / 2.0,
                cy: n / 2.0,
            },
            forward: b.forward.to_array(),
            right: b.right.to_array(),
            up: b.up.to_array(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSummary {
    pub floor: FloorSpec,
    pub container: Option<ContainerSpec>,
    pub lighting: Option<Lighting>,
    pub target_count: usize,
    pub spawned: usize,
    pub settled: usize,
    pub settle_moves: usize,
    pub energy_initial: f64,
    pub energy_final: f64,
    pub distractors_requested: usize,
    pub distractors_placed: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub visibility: Vec<VisibilityRecord>,
    pub removals: Vec<Removal>,
    pub filter_iterations: usize,
    pub settle_rejected: Vec<u32>,
    pub max_penetration: f64,
    pub distractor_shortfall: usize,
    /// Reasons earlier attempts of this scene were dropped.
    pub failed_attempts: Vec<String>,
    pub discard_reason: Option<String>,
}

/// Milliseconds per stage; all zero unless `recorded`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub recorded: bool,
    pub plan_ms: f64,
    pub settle_ms: f64,
    pub render_ms: f64,
    pub filter_ms: f64,
    pub export_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePaths {
    pub rgb: String,
    pub instance: String,
    pub class: String,
    pub depth: String,
    pub normals: String,
    pub coco: String,
    /// World units per depth level.
    pub depth_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub generator_version: String,
    /// Hex content hash of the config snapshot.
    pub config_hash: String,
    pub seeds: Seeds,
    pub status: SceneStatus,
    pub split: SplitLabel,
    pub class_definitions: Vec<ClassDefinition>,
    pub objects: Vec<ObjectRecord>,
    pub camera: Option<CameraRecord>,
    pub transforms: Option<TransformSummary>,
    pub diagnostics: Diagnostics,
    pub timings: Timings,
    pub prompts: Option<PromptSet>,
    pub exemplars: Vec<ExemplarRecord>,
    pub images: Option<ImagePaths>,
}

pub fn write_scene_record(path: &Path, record: &SceneRecord) -> Result<()> {
    let mut json = serde_json::to_vec_pretty(record).at(path)?;
    json.push(b'\n');
    std::fs::write(path, json).at(path)
}
