//! Dataset runs: worker pool, resume, manifest, merged COCO, summary and preview.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{export_scene, generate_scene, scene_dir, scene_relpath, GENERATOR_VERSION};
use crate::annotate::{load_coco, merge_coco, write_coco, SceneRecord, SceneStatus, Timings};
use crate::catalog::{build_catalog, AssetCatalog, SplitLabel};
use crate::config::GeneratorConfig;
use crate::error::{Error, IoContext, Result};
use crate::eval::{dataset_summary, SceneStats, SummaryStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Ok,
    Discarded,
    /// Hard failure while generating or writing the scene.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub scene_index: u64,
    pub status: EntryStatus,
    pub split: SplitLabel,
    pub attempts: u32,
    pub dir: String,
    pub files: Vec<String>,
    pub stats: SceneStats,
    pub timings: Timings,
    pub error: Option<String>,
}

impl ManifestEntry {
    fn from_record(r: &SceneRecord) -> ManifestEntry {
        let ok = r.status == SceneStatus::Ok;
        let files = r
            .images
            .iter()
            .flat_map(|i| [&i.rgb, &i.instance, &i.class, &i.depth, &i.normals, &i.coco])
            .cloned()
            .chain(std::iter::once(format!(
                "{}/meta.json",
                scene_relpath(r.seeds.scene_index)
            )))
            .collect();
        let counted = r.class_definitions.iter().filter(|c| !c.is_distractor);
        ManifestEntry {
            scene_index: r.seeds.scene_index,
            status: if ok { EntryStatus::Ok } else { EntryStatus::Discarded },
            split: r.split,
            attempts: r.seeds.attempt + 1,
            dir: scene_relpath(r.seeds.scene_index),
            files,
            stats: SceneStats {
                scene_index: r.seeds.scene_index,
                split: r.split,
                ok,
                class_counts: counted.map(|c| (c.class_id, c.count)).collect(),
                distractors: r
                    .class_definitions
                    .iter()
                    .filter(|c| c.is_distractor)
                    .map(|c| c.count)
                    .sum(),
                total_ms: r.timings.recorded.then_some(r.timings.total_ms),
            },
            timings: r.timings.clone(),
            error: r.diagnostics.discard_reason.clone(),
        }
    }

    fn failed(config: &GeneratorConfig, scene_index: u64, error: String) -> ManifestEntry {
        let split = super::scene_split(config, scene_index);
        ManifestEntry {
            scene_index,
            status: EntryStatus::Failed,
            split,
            attempts: 0,
            dir: scene_relpath(scene_index),
            files: Vec::new(),
            stats: SceneStats {
                scene_index,
                split,
                ok: false,
                class_counts: BTreeMap::new(),
                distractors: 0,
                total_ms: None,
            },
            timings: Timings::default(),
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub generator_version: String,
    pub config_hash: String,
    /// Config text with scheduling and location keys cleared.
    pub config: String,
    pub scene_count: u64,
    pub entries: Vec<ManifestEntry>,
    pub splits: BTreeMap<SplitLabel, Vec<u64>>,
}

#[derive(Debug, Clone)]
pub struct GenerateReport {
    pub manifest: DatasetManifest,
    pub generated: usize,
    pub resumed: usize,
    pub failed: usize,
    pub discarded: usize,
}

fn config_snapshot(config: &GeneratorConfig) -> String {
    let mut c = config.clone();
    c.workers = 0;
    c.output_dir = Default::default();
    c.to_text()
}

/// Record of a finished scene from an earlier run with the same content
/// hash, if all of its files are present.
fn resumable(root: &Path, config: &GeneratorConfig, scene_index: u64) -> Option<SceneRecord> {
    let meta = scene_dir(root, scene_index).join("meta.json");
    let r: SceneRecord = serde_json::from_slice(&std::fs::read(meta).ok()?).ok()?;
    let same = r.config_hash == format!("{:016x}", config.content_hash())
        && r.generator_version == GENERATOR_VERSION
        && r.seeds.scene_index == scene_index;
    let complete = ManifestEntry::from_record(&r)
        .files
        .iter()
        .all(|f| root.join(f).is_file());
    (same && complete).then_some(r)
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".to_owned())
}

enum Produced {
    Generated(ManifestEntry),
    Resumed(ManifestEntry),
}

/// Generates `config.scene_count` scenes into `config.output_dir`.
pub fn generate_dataset(config: &GeneratorConfig) -> Result<GenerateReport> {
    config.validate()?;
    let catalog = build_catalog(config);
    generate_dataset_with_catalog(config, &catalog)
}

pub fn generate_dataset_with_catalog(config: &GeneratorConfig, catalog: &AssetCatalog) -> Result<GenerateReport> {
    let root = config.output_dir.as_path();
    std::fs::create_dir_all(root.join("scenes")).at(root)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .expect("thread pool");
    let produced: Vec<Produced> = pool.install(|| -> Result<Vec<Produced>> {
        catalog.write(root, config.exemplar_resolution)?;
        Ok((0..config.scene_count)
            .into_par_iter()
            .map(|i| {
                if let Some(r) = resumable(root, config, i) {
                    return Produced::Resumed(ManifestEntry::from_record(&r));
                }
                let run = catch_unwind(AssertUnwindSafe(|| {
                    let mut r = generate_scene(catalog, config, i);
                    export_scene(root, &mut r).map(|_| ManifestEntry::from_record(&r.record))
                }));
                Produced::Generated(match run {
                    Ok(Ok(e)) => e,
                    Ok(Err(e)) => ManifestEntry::failed(config, i, e.to_string()),
                    Err(p) => ManifestEntry::failed(config, i, panic_message(p)),
                })
            })
            .collect())
    })?;

    let mut report = GenerateReport {
        manifest: DatasetManifest {
            generator_version: GENERATOR_VERSION.to_owned(),
            config_hash: format!("{:016x}", config.content_hash()),
            config: config_snapshot(config),
            scene_count: config.scene_count,
            entries: Vec::new(),
            splits: BTreeMap::new(),
        },
        generated: 0,
        resumed: 0,
        failed: 0,
        discarded: 0,
    };
    for p in produced {
        let e = match p {
            Produced::Generated(e) => {
                report.generated += 1;
                e
            }
            Produced::Resumed(e) => {
                report.resumed += 1;
                e
            }
        };
        match e.status {
            EntryStatus::Failed => {
                log::error!("scene {} failed: {}", e.scene_index, e.error.as_deref().unwrap_or(""));
                report.failed += 1;
            }
            EntryStatus::Discarded => report.discarded += 1,
            EntryStatus::Ok => {}
        }
        report.manifest.splits.entry(e.split).or_default().push(e.scene_index);
        report.manifest.entries.push(e);
    }
    let path = root.join("manifest.json");
    let mut json = serde_json::to_vec_pretty(&report.manifest).at(&path)?;
    json.push(b'\n');
    std::fs::write(&path, json).at(&path)?;

    let docs = report
        .manifest
        .entries
        .iter()
        .filter(|e| e.status == EntryStatus::Ok)
        .map(|e| load_coco(&root.join(&e.dir).join("coco.json")))
        .collect::<Result<Vec<_>>>()?;
    write_coco(&root.join("coco.json"), &merge_coco(docs)?)?;
    summarize(root)?;
    Ok(report)
}

pub fn load_manifest(root: &Path) -> Result<DatasetManifest> {
    let path = root.join("manifest.json");
    if !path.is_file() {
        return Err(Error::MissingManifest(path));
    }
    let bytes = std::fs::read(&path).at(&path)?;
    serde_json::from_slice(&bytes).at(&path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub generator_version: String,
    #[serde(flatten)]
    pub stats: SummaryStats,
    pub failed: usize,
    pub preview: String,
    pub preview_grid: [u32; 2],
}

const THUMB: u32 = 64;

/// Writes `summary.json` and `preview.png` for a finished run.
pub fn summarize(root: &Path) -> Result<Summary> {
    let manifest = load_manifest(root)?;
    let stats: Vec<SceneStats> = manifest.entries.iter().map(|e| e.stats.clone()).collect();
    let n = manifest.entries.len().max(1) as u32;
    let cols = (n as f64).sqrt().ceil() as u32;
    let rows = n.div_ceil(cols);
    let mut grid = RgbImage::from_pixel(cols * THUMB, rows * THUMB, image::Rgb([255, 255, 255]));
    for (k, e) in manifest.entries.iter().enumerate() {
        let (gx, gy) = ((k as u32 % cols) * THUMB, (k as u32 / cols) * THUMB);
        let tile = match e.status {
            EntryStatus::Ok => {
                let path = root.join(&e.dir).join("rgb.png");
                let img = image::open(&path).at(&path)?.into_rgb8();
                image::imageops::resize(&img, THUMB, THUMB, image::imageops::FilterType::Triangle)
            }
            _ => RgbImage::from_pixel(THUMB, THUMB, image::Rgb([96, 96, 96])),
        };
        image::imageops::replace(&mut grid, &tile, gx as i64, gy as i64);
    }
    let preview = root.join("preview.png");
    grid.save_with_format(&preview, image::ImageFormat::Png).at(&preview)?;
    let summary = Summary {
        generator_version: manifest.generator_version.clone(),
        stats: dataset_summary(&stats),
        failed: manifest
            .entries
            .iter()
            .filter(|e| e.status == EntryStatus::Failed)
            .count(),
        preview: "preview.png".to_owned(),
        preview_grid: [cols, rows],
    };
    let path = root.join("summary.json");
    let mut json = serde_json::to_vec_pretty(&summary).at(&path)?;
    json.push(b'\n');
    std::fs::write(&path, json).at(&path)?;
    Ok(summary)
}

/// Regenerates one scene of the run described by `config`, overwriting its
/// directory. Output matches a full run when timings are off.
pub fn regenerate_scene(config: &GeneratorConfig, scene_index: u64) -> Result<SceneRecord> {
    config.validate()?;
    if scene_index >= config.scene_count {
        return Err(Error::IndexOutOfRange {
            index: scene_index,
            count: config.scene_count,
        });
    }
    let catalog = build_catalog(config);
    let mut r = generate_scene(&catalog, config, scene_index);
    export_scene(&config.output_dir, &mut r)?;
    Ok(r.record)
}
