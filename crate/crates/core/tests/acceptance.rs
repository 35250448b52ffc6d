//! Acceptance suite. Runs every criterion, prints one line each and exits
//! nonzero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use tallyscene::annotate::load_coco;
use tallyscene::catalog::{build_catalog, AssetCatalog};
use tallyscene::config::GeneratorConfig;
use tallyscene::eval::{count_error_metrics, dataset_summary, CountPair, SceneStats};
use tallyscene::geometry::Aabb;
use tallyscene::pipeline::{attempt_label, generate_dataset_with_catalog, generate_scene, scene_split, EntryStatus};
use tallyscene::render::{render_passes, sample_camera, RenderScene};
use tallyscene::rng::derive_stream;
use tallyscene::scene::{sample_scene_plan, spawn_instances, InstanceState};
use tallyscene::visibility::visibility_ratio;

struct Verdict {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn base_config() -> GeneratorConfig {
    GeneratorConfig {
        resolution: 256,
        record_timings: false,
        exemplar_resolution: 32,
        ..GeneratorConfig::default()
    }
}

/// Per-scene facts kept from the large in-memory run.
#[derive(Default)]
struct SceneCheck {
    ok: bool,
    stats: Option<SceneStats>,
    /// Retained counted objects checked against a fresh render, and violators.
    guarantee_checked: usize,
    guarantee_violations: usize,
    exemplar_violations: usize,
    exemplar_groups: usize,
}

fn check_scene(catalog: &AssetCatalog, config: &GeneratorConfig, index: u64, recheck: bool) -> SceneCheck {
    let r = generate_scene(catalog, config, index);
    let mut c = SceneCheck {
        ok: r.is_ok(),
        ..SceneCheck::default()
    };
    if !r.is_ok() {
        c.stats = Some(SceneStats {
            scene_index: index,
            split: r.record.split,
            ok: false,
            class_counts: BTreeMap::new(),
            distractors: 0,
            total_ms: None,
        });
        return c;
    }
    let outcome = r.outcome.as_ref().unwrap();
    let ann = r.annotations.as_ref().unwrap();
    c.stats = Some(SceneStats {
        scene_index: index,
        split: r.record.split,
        ok: true,
        class_counts: ann.class_counts(),
        distractors: ann.annotations.iter().filter(|a| a.is_distractor).count(),
        total_ms: None,
    });

    if recheck {
        // Fresh render of exactly the annotated set, then occ from its masks.
        let plan = r.plan.as_ref().unwrap();
        let keep: BTreeSet<u32> = outcome.retained.iter().chain(&outcome.distractors).copied().collect();
        let kept: Vec<InstanceState> = r
            .instances
            .iter()
            .filter(|i| keep.contains(&i.instance_id))
            .cloned()
            .collect();
        let lighting = r.record.transforms.as_ref().unwrap().lighting.clone().unwrap();
        let scene = RenderScene::new(catalog, Some(&plan.floor), plan.container.as_ref(), &kept, lighting);
        let fresh = render_passes(&scene, r.camera.as_ref().unwrap(), config.rgb_supersample);
        let same_ids = fresh.instance_ids == outcome.passes.instance_ids;
        for a in ann.annotations.iter().filter(|a| !a.is_distractor) {
            c.guarantee_checked += 1;
            let v = visibility_ratio(&fresh.occluded_mask(a.instance_id), &fresh.unoccluded[&a.instance_id]);
            let occ = v.map(|v| 1.0 - v).unwrap_or(1.0);
            if occ >= config.visibility_threshold || !same_ids {
                c.guarantee_violations += 1;
            }
        }
    }

    // Exemplar contract: best is exactly 1, scores follow v * area.
    let mut groups: BTreeMap<u32, Vec<(f64, f64)>> = BTreeMap::new();
    for a in ann.annotations.iter().filter(|a| !a.is_distractor) {
        let s = a.exemplar_score.unwrap_or(f64::NAN);
        groups
            .entry(a.class_id)
            .or_default()
            .push((a.visibility * a.area as f64, s));
    }
    for g in groups.values_mut() {
        c.exemplar_groups += 1;
        g.sort_by(|x, y| y.0.total_cmp(&x.0));
        let top_is_one = g.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max) == 1.0 && g[0].1 == 1.0;
        let monotone = g.windows(2).all(|w| w[0].1 >= w[1].1);
        let positive = g.iter().all(|x| x.1 > 0.0 && x.1 <= 1.0);
        if !(top_is_one && monotone && positive) {
            c.exemplar_violations += 1;
        }
    }
    c
}

fn large_run(catalog: &AssetCatalog, config: &GeneratorConfig, out: &mut Vec<Verdict>) {
    const SCENES: u64 = 2000;
    const RECHECK: u64 = 500;
    const WORKERS: usize = 8;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(WORKERS).build().unwrap();
    let start = Instant::now();
    let checks: Vec<SceneCheck> = pool.install(|| {
        (0..SCENES)
            .into_par_iter()
            .map(|i| check_scene(catalog, config, i, i < RECHECK))
            .collect()
    });
    let wall = start.elapsed().as_secs_f64();

    let first: Vec<&SceneCheck> = checks.iter().take(RECHECK as usize).collect();
    let checked: usize = first.iter().map(|c| c.guarantee_checked).sum();
    let bad: usize = first.iter().map(|c| c.guarantee_violations).sum();
    let ok_first = first.iter().filter(|c| c.ok).count();
    out.push(Verdict {
        id: 1,
        name: "visibility guarantee",
        pass: bad == 0 && checked > 0,
        detail: format!(
            "{RECHECK} scenes ({ok_first} ok), {checked} annotated counted objects re-rendered, {bad} with occ >= {}",
            config.visibility_threshold
        ),
    });

    let stats: Vec<SceneStats> = checks.iter().filter_map(|c| c.stats.clone()).collect();
    let summary = dataset_summary(&stats);
    let ok: Vec<&SceneStats> = stats.iter().filter(|s| s.ok).collect();
    let bounded = ok.iter().all(|s| (1..=200).contains(&s.counted_total()));
    let imbalance_ok = summary.imbalance_histogram.total() == summary.ok
        && summary.imbalance_histogram.underflow == 0
        && summary.min_imbalance >= 1.0;
    let mean = summary.mean_objects_per_scene;
    out.push(Verdict {
        id: 6,
        name: "dataset statistics shape",
        pass: bounded && imbalance_ok && (40.0..=90.0).contains(&mean),
        detail: format!(
            "{} ok of {SCENES}, totals in [{}, {}], min imbalance {:.3}, mean objects {:.2}",
            summary.ok, summary.min_objects, summary.max_objects, summary.min_imbalance, mean
        ),
    });

    let per_scene = wall / SCENES as f64;
    out.push(Verdict {
        id: 7,
        name: "throughput",
        pass: per_scene <= 5.0,
        detail: format!(
            "{per_scene:.3} s/scene at 256^2 over {SCENES} scenes, {WORKERS} workers, {} cores available",
            std::thread::available_parallelism().map_or(1, |n| n.get())
        ),
    });

    let groups: usize = checks.iter().map(|c| c.exemplar_groups).sum();
    let ev: usize = checks.iter().map(|c| c.exemplar_violations).sum();
    out.push(Verdict {
        id: 8,
        name: "exemplar score contract",
        pass: ev == 0 && groups > 0,
        detail: format!("{groups} (image, class) groups, {ev} violations"),
    });
}

fn sampling(catalog: &AssetCatalog, config: &GeneratorConfig) -> Verdict {
    const PLANS: u64 = 10_000;
    let [lo, hi] = config.count_range;
    let mut counts = vec![0usize; (hi - lo + 1) as usize];
    let mut classes: BTreeMap<usize, usize> = BTreeMap::new();
    let (mut g_lo, mut g_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut e_lo, mut e_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut errors = 0;
    for i in 0..PLANS {
        let root = derive_stream(config.master_seed, i, &attempt_label(0));
        let plan = match sample_scene_plan(catalog, &root.child("plan"), config, scene_split(config, i), i) {
            Ok(p) => p,
            Err(_) => {
                errors += 1;
                continue;
            }
        };
        counts[plan.target_count - lo as usize] += 1;
        *classes.entry(plan.classes.len()).or_default() += 1;
        let spawned = spawn_instances(&plan, config, &mut root.child("spawn"));
        for s in &spawned {
            g_lo = g_lo.min(s.scale_jitter);
            g_hi = g_hi.max(s.scale_jitter);
        }
        let bounds = match &plan.container {
            Some(c) => c.aabb,
            None => spawned.iter().fold(Aabb::EMPTY, |b, s| b.union(s.hull_aabb(catalog))),
        };
        let centroid = spawned.iter().map(|s| s.position).sum::<glam::DVec3>() / spawned.len() as f64;
        let cam = sample_camera(&bounds, centroid, &mut root.child("camera"), config);
        let el = (cam.origin - cam.look_at).normalize().z.asin().to_degrees();
        e_lo = e_lo.min(el);
        e_hi = e_hi.max(el);
    }
    let n = (PLANS - errors) as f64;
    // One-sample KS against the discrete uniform on [lo, hi].
    let k = counts.len() as f64;
    let mut cum = 0.0;
    let mut d: f64 = 0.0;
    for (j, &c) in counts.iter().enumerate() {
        cum += c as f64;
        d = d.max((cum / n - (j + 1) as f64 / k).abs());
    }
    let d_crit = 1.6276 / n.sqrt();
    let freq_ok = (2..=4).all(|c| ((*classes.get(&c).unwrap_or(&0) as f64 / n) - 1.0 / 3.0).abs() <= 0.02);
    let gamma_ok = g_lo >= 0.98 && g_hi <= 1.02;
    let el_ok = e_lo >= 20.0 - 1e-9 && e_hi <= 80.0 + 1e-9;
    let freqs: Vec<String> = classes
        .iter()
        .map(|(c, v)| format!("{c}:{:.4}", *v as f64 / n))
        .collect();
    Verdict {
        id: 2,
        name: "sampling distributions",
        pass: errors == 0 && d < d_crit && freq_ok && gamma_ok && el_ok,
        detail: format!(
            "{PLANS} plans, KS D={d:.4} (crit {d_crit:.4}), classes {{{}}}, gamma [{g_lo:.4}, {g_hi:.4}], elevation [{e_lo:.2}, {e_hi:.2}] deg",
            freqs.join(", ")
        ),
    }
}

fn annotation_exactness(catalog: &AssetCatalog, config: &GeneratorConfig, dir: &Path) -> Verdict {
    let config = GeneratorConfig {
        scene_count: 100,
        output_dir: dir.to_path_buf(),
        ..config.clone()
    };
    let report = generate_dataset_with_catalog(&config, catalog).unwrap();
    let coco = load_coco(&dir.join("coco.json")).unwrap();
    let (mut boxes, mut box_bad, mut groups, mut count_bad) = (0, 0, 0, 0);
    for e in report.manifest.entries.iter().filter(|e| e.status == EntryStatus::Ok) {
        let inst = image::open(dir.join(&e.dir).join("instance.png"))
            .unwrap()
            .into_luma16();
        let class = image::open(dir.join(&e.dir).join("class.png")).unwrap().into_luma16();
        let n = inst.width();
        let mut scan: BTreeMap<u16, [u32; 4]> = BTreeMap::new();
        let mut ids_per_class: BTreeMap<u16, BTreeSet<u16>> = BTreeMap::new();
        for y in 0..n {
            for x in 0..n {
                let id = inst.get_pixel(x, y).0[0];
                if id == 0 {
                    continue;
                }
                let b = scan.entry(id).or_insert([u32::MAX, u32::MAX, 0, 0]);
                *b = [b[0].min(x), b[1].min(y), b[2].max(x), b[3].max(y)];
                ids_per_class.entry(class.get_pixel(x, y).0[0]).or_default().insert(id);
            }
        }
        let anns: Vec<_> = coco
            .annotations
            .iter()
            .filter(|a| a.image_id == e.scene_index)
            .collect();
        for a in &anns {
            boxes += 1;
            let want = scan
                .get(&(a.extra.instance_id as u16))
                .map(|b| [b[0], b[1], b[2] - b[0] + 1, b[3] - b[1] + 1]);
            if want != Some(a.bbox) {
                box_bad += 1;
            }
        }
        for (c, ids) in &ids_per_class {
            groups += 1;
            if anns.iter().filter(|a| a.extra.class_id == *c as u32).count() != ids.len() {
                count_bad += 1;
            }
        }
    }
    Verdict {
        id: 3,
        name: "annotation exactness",
        pass: box_bad == 0 && count_bad == 0 && boxes > 0,
        detail: format!(
            "{} ok scenes, {boxes} boxes ({box_bad} mismatched), {groups} class groups ({count_bad} count mismatches)",
            report
                .manifest
                .entries
                .iter()
                .filter(|e| e.status == EntryStatus::Ok)
                .count()
        ),
    }
}

fn metric_oracle() -> Verdict {
    let mut rng = derive_stream(1, 0, "acceptance/metrics");
    let rel = |a: f64, b: f64| {
        if a == b {
            0.0
        } else {
            (a - b).abs() / a.abs().max(b.abs())
        }
    };
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.int(1, 80).unwrap() as usize;
        let pairs: Vec<CountPair> = (0..n)
            .map(|k| {
                let y = rng.int(1, 200).unwrap() as u64;
                CountPair {
                    image_id: k as u64,
                    class_id: 1,
                    ground_truth: y,
                    predicted: (y as f64 * rng.uniform(0.5, 1.5).unwrap()).max(0.0),
                }
            })
            .collect();
        let r = count_error_metrics(&pairs).unwrap();
        let m = n as f64;
        let e: Vec<f64> = pairs.iter().map(|p| p.ground_truth as f64 - p.predicted).collect();
        let mae = e.iter().map(|v| v.abs()).sum::<f64>() / m;
        let rmse = (e.iter().map(|v| v * v).sum::<f64>() / m).sqrt();
        let nae_i: Vec<f64> = e
            .iter()
            .zip(&pairs)
            .map(|(v, p)| v.abs() / p.ground_truth as f64)
            .collect();
        let nae = nae_i.iter().sum::<f64>() / m;
        let acc = nae_i.iter().filter(|&&v| v <= 0.1).count() as f64 / m;
        worst = worst
            .max(rel(r.mae, mae))
            .max(rel(r.rmse, rmse))
            .max(rel(r.nae, nae))
            .max(rel(r.acc10, acc));
    }
    let pair = |y, p| CountPair {
        image_id: y,
        class_id: 1,
        ground_truth: y,
        predicted: p,
    };
    let h = count_error_metrics(&[pair(10, 9.0), pair(20, 24.0)]).unwrap();
    let hand = h.mae == 2.5 && h.rmse == 8.5f64.sqrt() && rel(h.nae, 0.15) <= f64::EPSILON && h.acc10 == 0.5;
    Verdict {
        id: 4,
        name: "metric oracle",
        pass: worst <= 1e-12 && hand,
        detail: format!(
            "1000 sets, worst relative error {worst:.2e}; hand case MAE {} RMSE {} NAE {} Acc10% {}",
            h.mae, h.rmse, h.nae, h.acc10
        ),
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

fn determinism(catalog: &AssetCatalog, config: &GeneratorConfig, a: &Path, b: &Path) -> Verdict {
    let run = |dir: &Path, workers| {
        let c = GeneratorConfig {
            scene_count: 50,
            workers,
            output_dir: dir.to_path_buf(),
            ..config.clone()
        };
        generate_dataset_with_catalog(&c, catalog).unwrap();
        tree(dir)
    };
    let ta = run(a, 1);
    let tb = run(b, 8);
    let differing = ta
        .keys()
        .chain(tb.keys())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|k| ta.get(*k) != tb.get(*k))
        .count();
    Verdict {
        id: 5,
        name: "determinism",
        pass: differing == 0 && !ta.is_empty(),
        detail: format!("50 scenes, workers 1 vs 8: {} files, {differing} differ", ta.len()),
    }
}

fn main() {
    let _ = env_logger::builder().is_test(true).try_init();
    let config = base_config();
    let catalog = build_catalog(&config);
    let tmp = tempfile::tempdir().unwrap();
    let mut verdicts = Vec::new();
    let t = Instant::now();

    verdicts.push(sampling(&catalog, &config));
    verdicts.push(annotation_exactness(&catalog, &config, &tmp.path().join("c3")));
    verdicts.push(metric_oracle());
    verdicts.push(determinism(
        &catalog,
        &config,
        &tmp.path().join("c5a"),
        &tmp.path().join("c5b"),
    ));
    large_run(&catalog, &config, &mut verdicts);

    verdicts.sort_by_key(|v| v.id);
    println!();
    for v in &verdicts {
        println!(
            "criterion {} {}: {} ({})",
            v.id,
            v.name,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    let failed = verdicts.iter().filter(|v| !v.pass).count();
    println!(
        "acceptance: {} of {} passed in {:.0} s",
        verdicts.len() - failed,
        verdicts.len(),
        t.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
