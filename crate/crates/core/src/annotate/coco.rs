//! COCO documents with extension attributes under `extra`.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{category_id, AnnotationRecord, BBox};
use crate::catalog::{DescriptionTriple, SplitLabel};
use crate::error::{Error, IoContext, Result};
use crate::scene::{Derivation, ObjectClassSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    pub split: SplitLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationExtra {
    pub instance_id: u32,
    pub class_id: u32,
    pub is_distractor: bool,
    pub visibility: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exemplar_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: BBox,
    pub area: u64,
    pub iscrowd: u8,
    pub extra: AnnotationExtra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryExtra {
    pub image_id: u64,
    pub class_id: u32,
    pub template_id: String,
    pub is_distractor: bool,
    pub derivation: Derivation,
    pub descriptions: DescriptionTriple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
    pub supercategory: String,
    pub extra: CategoryExtra,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CocoDocument {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

impl CocoDocument {
    fn check_ids(&self) -> Result<()> {
        fn unique(kind: &'static str, ids: impl Iterator<Item = u64>) -> Result<()> {
            let mut seen = HashSet::new();
            for id in ids {
                if !seen.insert(id) {
                    return Err(Error::DuplicateId { kind, id });
                }
            }
            Ok(())
        }
        unique("image", self.images.iter().map(|i| i.id))?;
        unique("annotation", self.annotations.iter().map(|a| a.id))?;
        unique("category", self.categories.iter().map(|c| c.id))
    }

    pub fn records(&self) -> Vec<AnnotationRecord> {
        self.annotations
            .iter()
            .map(|a| AnnotationRecord {
                id: a.id,
                image_id: a.image_id,
                instance_id: a.extra.instance_id,
                class_id: a.extra.class_id,
                bbox: a.bbox,
                area: a.area,
                is_distractor: a.extra.is_distractor,
                visibility: a.extra.visibility,
                exemplar_score: a.extra.exemplar_score,
            })
            .collect()
    }

    pub fn category(&self, id: u64) -> Option<&CocoCategory> {
        self.categories.iter().find(|c| c.id == id)
    }
}

pub fn export_coco(
    image: CocoImage,
    annotations: &[AnnotationRecord],
    classes: &[ObjectClassSpec],
) -> Result<CocoDocument> {
    let image_id = image.id;
    let doc = CocoDocument {
        annotations: annotations
            .iter()
            .map(|a| CocoAnnotation {
                id: a.id,
                image_id: a.image_id,
                category_id: category_id(a.image_id, a.class_id),
                bbox: a.bbox,
                area: a.area,
                iscrowd: 0,
                extra: AnnotationExtra {
                    instance_id: a.instance_id,
                    class_id: a.class_id,
                    is_distractor: a.is_distractor,
                    visibility: a.visibility,
                    exemplar_score: a.exemplar_score,
                },
            })
            .collect(),
        categories: classes
            .iter()
            .map(|c| CocoCategory {
                id: category_id(image_id, c.class_id),
                name: c.descriptions.short.clone(),
                supercategory: c.category.noun().to_owned(),
                extra: CategoryExtra {
                    image_id,
                    class_id: c.class_id,
                    template_id: c.template_id.clone(),
                    is_distractor: c.is_distractor(),
                    derivation: c.derivation,
                    descriptions: c.descriptions.clone(),
                },
            })
            .collect(),
        images: vec![image],
    };
    doc.check_ids()?;
    Ok(doc)
}

/// Concatenates per-scene documents in the given order.
pub fn merge_coco(docs: impl IntoIterator<Item = CocoDocument>) -> Result<CocoDocument> {
    let mut out = CocoDocument::default();
    for d in docs {
        out.images.extend(d.images);
        out.annotations.extend(d.annotations);
        out.categories.extend(d.categories);
    }
    out.check_ids()?;
    Ok(out)
}

pub fn write_coco(path: &Path, doc: &CocoDocument) -> Result<()> {
    let json = serde_json::to_vec(doc).at(path)?;
    std::fs::write(path, json).at(path)
}

pub fn load_coco(path: &Path) -> Result<CocoDocument> {
    let bytes = std::fs::read(path).at(path)?;
    let doc: CocoDocument = serde_json::from_slice(&bytes).at(path)?;
    doc.check_ids()?;
    Ok(doc)
}
