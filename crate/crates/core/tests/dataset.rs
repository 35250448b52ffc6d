use std::path::Path;

use tallyscene::annotate::load_coco;
use tallyscene::catalog::{split_for_key, SplitLabel};
use tallyscene::config::GeneratorConfig;
use tallyscene::eval::ground_truth_counts;
use tallyscene::pipeline::{generate_dataset, load_manifest, summarize, EntryStatus};

fn config(dir: &Path, scenes: u64) -> GeneratorConfig {
    GeneratorConfig {
        master_seed: 21,
        scene_count: scenes,
        resolution: 64,
        output_dir: dir.to_path_buf(),
        split_ratios: [0.5, 0.0, 0.5],
        catalog_size: 80,
        exemplar_resolution: 16,
        count_range: [30, 60],
        record_timings: false,
        ..GeneratorConfig::default()
    }
}

#[test]
fn summary_matches_coco_recount() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), 12);
    let report = generate_dataset(&cfg).unwrap();
    assert_eq!(report.failed, 0);
    let manifest = load_manifest(tmp.path()).unwrap();
    assert_eq!(manifest.entries.len(), 12);
    for e in &manifest.entries {
        for f in &e.files {
            assert!(tmp.path().join(f).is_file(), "{f}");
        }
    }

    let splits: usize = manifest.splits.values().map(Vec::len).sum();
    assert_eq!(splits, 12);
    for (label, ids) in &manifest.splits {
        for i in ids {
            assert_eq!(split_for_key(&format!("scene-{i}"), cfg.split_ratios), *label);
        }
    }

    let coco = load_coco(&tmp.path().join("coco.json")).unwrap();
    let summary = summarize(tmp.path()).unwrap();
    let ok = manifest.entries.iter().filter(|e| e.status == EntryStatus::Ok).count();
    assert_eq!(summary.stats.ok, ok);
    assert_eq!(coco.images.len(), ok);
    let counted = coco.annotations.iter().filter(|a| !a.extra.is_distractor).count();
    let distractors = coco.annotations.len() - counted;
    assert_eq!(summary.stats.objects, counted);
    assert_eq!(summary.stats.distractors, distractors);
    let gt = ground_truth_counts(&coco, false, None);
    assert_eq!(gt.values().sum::<u64>() as usize, counted);
    let test_gt = ground_truth_counts(&coco, false, Some(SplitLabel::Test));
    let in_test = |image: u64| {
        manifest
            .splits
            .get(&SplitLabel::Test)
            .is_some_and(|v| v.contains(&image))
    };
    assert!(test_gt.keys().all(|(image, _)| in_test(*image)));

    assert_eq!(summary.preview_grid, [4, 3]);
    let grid = image::open(tmp.path().join("preview.png")).unwrap();
    assert_eq!((grid.width(), grid.height()), (4 * 64, 3 * 64));
}

#[test]
fn single_scene_has_one_tile() {
    let tmp = tempfile::tempdir().unwrap();
    generate_dataset(&config(tmp.path(), 1)).unwrap();
    let summary = summarize(tmp.path()).unwrap();
    assert_eq!(summary.preview_grid, [1, 1]);
    assert_eq!(summary.stats.scenes, 1);
    let grid = image::open(tmp.path().join("preview.png")).unwrap();
    assert_eq!(grid.width(), 64);
}
