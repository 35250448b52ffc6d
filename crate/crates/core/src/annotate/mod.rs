//! Ground truth for one scene: boxes, exemplars, prompts, COCO documents,
//! segmentation maps and the per-scene record.

mod coco;
mod maps;
mod record;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::catalog::{AssetCatalog, DescriptionTriple};
use crate::config::ExemplarScoring;
use crate::error::{Error, Result};
use crate::render::BitMask;
use crate::scene::{InstanceState, ObjectClassSpec};
use crate::visibility::FilterOutcome;

pub use coco::{
    export_coco, load_coco, merge_coco, write_coco, AnnotationExtra, CategoryExtra, CocoAnnotation, CocoCategory,
    CocoDocument, CocoImage,
};
pub use maps::{class_map, depth_map, export_segmentation_maps, instance_map, normal_map, write_png, SegmentationMaps};
pub use record::{
    write_scene_record, CameraRecord, ClassDefinition, Diagnostics, ImagePaths, Intrinsics, ObjectRecord, ObjectStatus,
    SceneRecord, SceneStatus, Seeds, Timings, TransformSummary,
};

pub const ANNOTATION_ID_STRIDE: u64 = 10_000;
pub const CATEGORY_ID_STRIDE: u64 = 1_000;

pub fn annotation_id(image_id: u64, k: usize) -> u64 {
    image_id * ANNOTATION_ID_STRIDE + k as u64
}

pub fn category_id(image_id: u64, class_id: u32) -> u64 {
    image_id * CATEGORY_ID_STRIDE + class_id as u64
}

/// `(x, y, w, h)` in pixels.
pub type BBox = [u32; 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: u64,
    pub image_id: u64,
    pub instance_id: u32,
    pub class_id: u32,
    pub bbox: BBox,
    pub area: u64,
    pub is_distractor: bool,
    pub visibility: f64,
    /// Internal-exemplar score; `None` for distractors.
    pub exemplar_score: Option<f64>,
}

/// Minimal box around the set pixels.
pub fn tight_bbox(mask: &BitMask) -> Result<BBox> {
    let mut b = [u32::MAX, u32::MAX, 0, 0];
    for (x, y) in mask.iter() {
        let (x, y) = (x as u32, y as u32);
        b = [b[0].min(x), b[1].min(y), b[2].max(x + 1), b[3].max(y + 1)];
    }
    if b[0] == u32::MAX {
        return Err(Error::EmptyMask);
    }
    Ok([b[0], b[1], b[2] - b[0], b[3] - b[1]])
}

/// Box and pixel count of every nonzero id, in one scan.
pub fn boxes_from_ids(ids: &[u32], size: usize) -> BTreeMap<u32, (BBox, u64)> {
    let mut acc: BTreeMap<u32, ([u32; 4], u64)> = BTreeMap::new();
    for (i, &id) in ids.iter().enumerate() {
        if id == 0 {
            continue;
        }
        let (x, y) = ((i % size) as u32, (i / size) as u32);
        let e = acc.entry(id).or_insert(([u32::MAX, u32::MAX, 0, 0], 0));
        e.0 = [e.0[0].min(x), e.0[1].min(y), e.0[2].max(x + 1), e.0[3].max(y + 1)];
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(id, (b, a))| (id, ([b[0], b[1], b[2] - b[0], b[3] - b[1]], a)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExemplarKind {
    Internal,
    External { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarRecord {
    pub image_id: u64,
    pub class_id: u32,
    /// `None` for external exemplars.
    pub instance_id: Option<u32>,
    pub bbox: Option<BBox>,
    pub score: f64,
    #[serde(flatten)]
    pub kind: ExemplarKind,
}

fn quality(a: &AnnotationRecord, scoring: ExemplarScoring) -> f64 {
    match scoring {
        ExemplarScoring::VisibilitySize => a.visibility * a.area as f64,
        ExemplarScoring::Size => a.area as f64,
    }
}

/// Scores counted annotations against the best instance of their class in
/// the same image. Output is grouped by class, best first.
pub fn score_internal_exemplars(annotations: &[AnnotationRecord], scoring: ExemplarScoring) -> Vec<ExemplarRecord> {
    let mut groups: BTreeMap<(u64, u32), Vec<&AnnotationRecord>> = BTreeMap::new();
    for a in annotations.iter().filter(|a| !a.is_distractor) {
        if quality(a, scoring) > 0.0 {
            groups.entry((a.image_id, a.class_id)).or_default().push(a);
        }
    }
    let mut out = Vec::new();
    for ((image_id, class_id), mut members) in groups {
        members.sort_by(|a, b| {
            quality(b, scoring)
                .total_cmp(&quality(a, scoring))
                .then(a.instance_id.cmp(&b.instance_id))
        });
        let best = quality(members[0], scoring);
        for a in members {
            out.push(ExemplarRecord {
                image_id,
                class_id,
                instance_id: Some(a.instance_id),
                bbox: Some(a.bbox),
                score: quality(a, scoring) / best,
                kind: ExemplarKind::Internal,
            });
        }
    }
    out
}

/// Canonical-render exemplar of each counted class.
pub fn external_exemplars(image_id: u64, classes: &[ObjectClassSpec]) -> Vec<ExemplarRecord> {
    classes
        .iter()
        .filter(|c| !c.is_distractor())
        .map(|c| ExemplarRecord {
            image_id,
            class_id: c.class_id,
            instance_id: None,
            bbox: None,
            score: 1.0,
            kind: ExemplarKind::External {
                path: AssetCatalog::exemplar_relpath(&c.template_id),
            },
        })
        .collect()
}

/// Positive prompts per counted class; each class's negatives are the others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSet {
    pub positives: BTreeMap<u32, DescriptionTriple>,
}

impl PromptSet {
    pub fn from_classes(classes: &[ObjectClassSpec]) -> PromptSet {
        PromptSet {
            positives: classes
                .iter()
                .filter(|c| !c.is_distractor())
                .map(|c| (c.class_id, c.descriptions.clone()))
                .collect(),
        }
    }

    pub fn negatives(&self, class_id: u32) -> Vec<&DescriptionTriple> {
        self.positives
            .iter()
            .filter(|(&k, _)| k != class_id)
            .map(|(_, d)| d)
            .collect()
    }

    pub fn shorts_are_distinct(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.positives.values().all(|d| seen.insert(d.short.as_str()))
    }
}

#[derive(Debug, Clone)]
pub struct SceneAnnotations {
    pub annotations: Vec<AnnotationRecord>,
    pub internal_exemplars: Vec<ExemplarRecord>,
    pub external_exemplars: Vec<ExemplarRecord>,
    pub prompts: PromptSet,
}

impl SceneAnnotations {
    /// Counted annotations per class id.
    pub fn class_counts(&self) -> BTreeMap<u32, usize> {
        let mut m = BTreeMap::new();
        for a in self.annotations.iter().filter(|a| !a.is_distractor) {
            *m.entry(a.class_id).or_insert(0) += 1;
        }
        m
    }
}

/// Annotates every retained counted instance and every visible distractor.
/// `classes` holds counted and distractor classes.
pub fn annotate_scene(
    image_id: u64,
    classes: &[ObjectClassSpec],
    instances: &[InstanceState],
    outcome: &FilterOutcome,
    scoring: ExemplarScoring,
) -> Result<SceneAnnotations> {
    let passes = &outcome.passes;
    let boxes = boxes_from_ids(&passes.instance_ids, passes.resolution);
    let by_id: BTreeMap<u32, &InstanceState> = instances.iter().map(|i| (i.instance_id, i)).collect();
    let mut annotations = Vec::new();
    let mut ids: Vec<u32> = outcome.retained.iter().chain(&outcome.distractors).copied().collect();
    ids.sort_unstable();
    for id in ids {
        let inst = by_id.get(&id).ok_or(Error::UnknownInstance(id))?;
        let Some(&(bbox, area)) = boxes.get(&id) else {
            if inst.is_distractor {
                continue;
            }
            return Err(Error::EmptyMask);
        };
        let visibility = outcome.record(id).map_or(0.0, |r| r.visibility);
        annotations.push(AnnotationRecord {
            id: annotation_id(image_id, annotations.len()),
            image_id,
            instance_id: id,
            class_id: inst.class_id,
            bbox,
            area,
            is_distractor: inst.is_distractor,
            visibility,
            exemplar_score: None,
        });
    }
    let internal = score_internal_exemplars(&annotations, scoring);
    for e in &internal {
        if let Some(a) = annotations.iter_mut().find(|a| Some(a.instance_id) == e.instance_id) {
            a.exemplar_score = Some(e.score);
        }
    }
    Ok(SceneAnnotations {
        annotations,
        internal_exemplars: internal,
        external_exemplars: external_exemplars(image_id, classes),
        prompts: PromptSet::from_classes(classes),
    })
}
