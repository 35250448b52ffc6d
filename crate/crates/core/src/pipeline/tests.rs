use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::*;
use crate::annotate::load_coco;
use crate::catalog::{build_catalog, build_catalog_sized};
use crate::error::Error;

fn small(dir: &Path, scenes: u64) -> GeneratorConfig {
    GeneratorConfig {
        master_seed: 5,
        scene_count: scenes,
        resolution: 64,
        output_dir: dir.to_path_buf(),
        split_ratios: [1.0, 0.0, 0.0],
        catalog_size: 60,
        exemplar_resolution: 16,
        count_range: [30, 60],
        record_timings: false,
        ..GeneratorConfig::default()
    }
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn single_scene_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(dir.path(), 1);
    let report = generate_dataset(&config).unwrap();
    assert_eq!(report.failed, 0);
    assert_eq!(report.manifest.entries.len(), 1);
    let e = &report.manifest.entries[0];
    assert_eq!(e.status, EntryStatus::Ok);
    for name in [
        "rgb.png",
        "instance.png",
        "class.png",
        "depth.png",
        "normals.png",
        "meta.json",
        "coco.json",
    ] {
        assert!(dir.path().join("scenes/scene_000000").join(name).is_file(), "{name}");
    }
    for name in [
        "manifest.json",
        "coco.json",
        "summary.json",
        "preview.png",
        "catalog/catalog.json",
    ] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    assert!(e.files.iter().all(|f| dir.path().join(f).is_file()));
    let preview = image::open(dir.path().join("preview.png")).unwrap();
    assert_eq!((preview.width(), preview.height()), (64, 64));

    let meta: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("scenes/scene_000000/meta.json")).unwrap()).unwrap();
    for key in [
        "class_definitions",
        "objects",
        "camera",
        "transforms",
        "diagnostics",
        "timings",
        "generator_version",
        "seeds",
    ] {
        assert!(!meta[key].is_null(), "{key}");
    }
    let coco = load_coco(&dir.path().join("coco.json")).unwrap();
    assert_eq!(coco.images.len(), 1);
    let counted: usize = e.stats.class_counts.values().sum();
    assert_eq!(
        coco.annotations.iter().filter(|a| !a.extra.is_distractor).count(),
        counted
    );
}

#[test]
fn regeneration_and_resume_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(dir.path(), 4);
    let catalog = build_catalog(&config);
    let first = generate_dataset_with_catalog(&config, &catalog).unwrap();
    assert_eq!(first.generated, 4);
    let full = tree(dir.path());

    regenerate_scene(&config, 2).unwrap();
    assert_eq!(tree(dir.path()), full);

    // Simulated crash: one scene and the run-level files are gone.
    std::fs::remove_dir_all(dir.path().join("scenes/scene_000001")).unwrap();
    std::fs::remove_file(dir.path().join("manifest.json")).unwrap();
    std::fs::remove_file(dir.path().join("coco.json")).unwrap();
    let again = generate_dataset_with_catalog(&config, &catalog).unwrap();
    assert_eq!((again.generated, again.resumed), (1, 3));
    assert_eq!(tree(dir.path()), full);

    assert!(matches!(
        regenerate_scene(&config, 4),
        Err(Error::IndexOutOfRange { index: 4, count: 4 })
    ));
}

#[test]
fn standalone_regeneration() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(dir.path(), 10);
    let r = regenerate_scene(&config, 7).unwrap();
    assert_eq!(r.seeds.scene_index, 7);
    let images = r.images.unwrap();
    assert!(dir.path().join(images.rgb).is_file());
    assert!(!dir.path().join("scenes/scene_000000").exists());
}

#[test]
fn unsatisfiable_scenes_are_discarded_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let config = GeneratorConfig {
        class_count_range: [4, 4],
        ..small(dir.path(), 3)
    };
    let catalog = build_catalog_sized(0, 3, config.split_ratios);
    let report = generate_dataset_with_catalog(&config, &catalog).unwrap();
    assert_eq!((report.discarded, report.failed), (3, 0));
    let summary = summarize(dir.path()).unwrap();
    assert_eq!(summary.stats.discarded, 3);
    let meta: crate::annotate::SceneRecord =
        serde_json::from_slice(&std::fs::read(dir.path().join("scenes/scene_000001/meta.json")).unwrap()).unwrap();
    assert!(meta.images.is_none());
    assert!(meta.diagnostics.discard_reason.is_some());
    assert_eq!(
        meta.diagnostics.failed_attempts.len(),
        config.max_scene_attempts as usize
    );
    assert_eq!(load_coco(&dir.path().join("coco.json")).unwrap().annotations.len(), 0);
}

#[test]
fn summarize_needs_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(summarize(dir.path()), Err(Error::MissingManifest(_))));
}

#[test]
fn retry_streams_are_independent_of_neighbours() {
    let config = small(Path::new("unused"), 3);
    let catalog = build_catalog(&config);
    let a = attempt_scene(&catalog, &config, 1, 0);
    let b = attempt_scene(&catalog, &config, 1, 1);
    assert_ne!(a.plan, b.plan);
    assert_eq!(attempt_scene(&catalog, &config, 1, 1).plan, b.plan);
    assert_eq!(attempt_label(0), "scene");
    assert_eq!(attempt_label(3), "retry-3");
}
