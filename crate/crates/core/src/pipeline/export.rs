//! Writes one scene's files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::annotate::{
    depth_map, export_coco, export_segmentation_maps, normal_map, write_coco, write_png, write_scene_record, CocoImage,
    ImagePaths, SceneStatus,
};
use crate::error::{IoContext, Result};

use super::SceneResult;

pub fn scene_relpath(scene_index: u64) -> String {
    format!("scenes/scene_{scene_index:06}")
}

pub fn scene_dir(root: &Path, scene_index: u64) -> PathBuf {
    root.join(scene_relpath(scene_index))
}

/// Writes the scene under `root` and fills `result.record.images`.
/// `meta.json` goes last, so its presence marks a complete scene.
pub fn export_scene(root: &Path, result: &mut SceneResult) -> Result<()> {
    let start = Instant::now();
    let index = result.record.seeds.scene_index;
    let rel = scene_relpath(index);
    let dir = root.join(&rel);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).at(&dir)?;
    }
    std::fs::create_dir_all(&dir).at(&dir)?;

    if result.record.status == SceneStatus::Ok {
        let outcome = result.outcome.as_ref().expect("ok scenes carry passes");
        let ann = result.annotations.as_ref().expect("ok scenes carry annotations");
        let passes = &outcome.passes;
        let class_of: BTreeMap<u32, u32> = result.instances.iter().map(|i| (i.instance_id, i.class_id)).collect();
        let maps = export_segmentation_maps(passes, &class_of);
        let (depth, depth_scale) = depth_map(passes);
        let file = |name: &str| format!("{rel}/{name}");
        let rgb = root.join(file("rgb.png"));
        passes.rgb.save_with_format(&rgb, image::ImageFormat::Png).at(&rgb)?;
        write_png(&root.join(file("instance.png")), &maps.instance)?;
        write_png(&root.join(file("class.png")), &maps.class)?;
        write_png(&root.join(file("depth.png")), &depth)?;
        write_png(&root.join(file("normals.png")), &normal_map(passes))?;
        let n = passes.resolution as u32;
        let image = CocoImage {
            id: index,
            file_name: file("rgb.png"),
            width: n,
            height: n,
            split: result.record.split,
        };
        let doc = export_coco(image, &ann.annotations, &result.classes)?;
        write_coco(&root.join(file("coco.json")), &doc)?;
        result.record.images = Some(ImagePaths {
            rgb: file("rgb.png"),
            instance: file("instance.png"),
            class: file("class.png"),
            depth: file("depth.png"),
            normals: file("normals.png"),
            coco: file("coco.json"),
            depth_scale,
        });
    }

    let t = &mut result.record.timings;
    if t.recorded {
        t.export_ms = start.elapsed().as_secs_f64() * 1e3;
        t.total_ms = t.plan_ms + t.settle_ms + t.render_ms + t.filter_ms + t.export_ms;
    }
    let meta = dir.join("meta.json");
    let tmp = dir.join("meta.json.tmp");
    write_scene_record(&tmp, &result.record)?;
    std::fs::rename(&tmp, &meta).at(&meta)
}
