//! Counting metrics, prediction loading and dataset statistics.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotate::{AnnotationRecord, CocoDocument};
use crate::catalog::SplitLabel;
use crate::error::{Error, IoContext, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountPair {
    pub image_id: u64,
    pub class_id: u32,
    pub ground_truth: u64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    pub nae: f64,
    pub acc10: f64,
    /// Per-pair NAE, in input order, over pairs with a nonzero ground truth.
    pub per_sample_nae: Vec<f64>,
    /// Pairs left out of NAE and Acc10% because their ground truth is 0.
    pub zero_ground_truth: usize,
}

impl std::fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "MAE {:.2}, RMSE {:.2}, NAE {:.2}, Acc10% {:.2}",
            self.mae, self.rmse, self.nae, self.acc10
        )
    }
}

pub fn count_error_metrics(pairs: &[CountPair]) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = pairs.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut per_sample_nae = Vec::with_capacity(pairs.len());
    for p in pairs {
        let e = (p.ground_truth as f64 - p.predicted).abs();
        abs += e;
        sq += e * e;
        if p.ground_truth == 0 {
            log::warn!(
                "image {} class {}: zero ground truth left out of NAE",
                p.image_id,
                p.class_id
            );
        } else {
            per_sample_nae.push(e / p.ground_truth as f64);
        }
    }
    let m = per_sample_nae.len();
    let (nae, acc10) = if m == 0 {
        (0.0, 0.0)
    } else {
        (
            per_sample_nae.iter().sum::<f64>() / m as f64,
            per_sample_nae.iter().filter(|&&v| v <= 0.1).count() as f64 / m as f64,
        )
    };
    Ok(MetricsReport {
        n: pairs.len(),
        mae: abs / n,
        rmse: (sq / n).sqrt(),
        nae,
        acc10,
        zero_ground_truth: pairs.len() - m,
        per_sample_nae,
    })
}

/// Ground-truth counts keyed by `(image_id, class_id)`.
pub type GroundTruth = BTreeMap<(u64, u32), u64>;

/// One key per category of the selected images; distractor categories only
/// when `include_distractors`.
pub fn ground_truth_counts(doc: &CocoDocument, include_distractors: bool, split: Option<SplitLabel>) -> GroundTruth {
    let images: std::collections::BTreeSet<u64> = doc
        .images
        .iter()
        .filter(|i| split.is_none_or(|s| i.split == s))
        .map(|i| i.id)
        .collect();
    let mut gt = GroundTruth::new();
    for c in &doc.categories {
        if images.contains(&c.extra.image_id) && (include_distractors || !c.extra.is_distractor) {
            gt.insert((c.extra.image_id, c.extra.class_id), 0);
        }
    }
    for a in &doc.annotations {
        if let Some(v) = gt.get_mut(&(a.image_id, a.extra.class_id)) {
            *v += 1;
        }
    }
    gt
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionLine {
    image_id: u64,
    class_id: u32,
    count: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedPredictions {
    /// One pair per ground-truth key, in key order.
    pub pairs: Vec<CountPair>,
    pub warnings: Vec<String>,
}

/// Reads JSON lines `{"image_id", "class_id", "count"}` and joins them with
/// `gt`. Blank lines are skipped; missing keys predict 0.
pub fn parse_predictions(text: &str, gt: &GroundTruth) -> Result<LoadedPredictions> {
    let mut pred: BTreeMap<(u64, u32), f64> = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let p: PredictionLine = serde_json::from_str(raw).map_err(|e| Error::MalformedPrediction {
            line,
            message: e.to_string(),
        })?;
        if !p.count.is_finite() || p.count < 0.0 {
            return Err(Error::MalformedPrediction {
                line,
                message: format!("count must be a non-negative number, got {}", p.count),
            });
        }
        let key = (p.image_id, p.class_id);
        if !gt.contains_key(&key) {
            return Err(Error::UnknownPair {
                image_id: p.image_id,
                class_id: p.class_id,
            });
        }
        if pred.insert(key, p.count).is_some() {
            return Err(Error::DuplicatePrediction {
                image_id: p.image_id,
                class_id: p.class_id,
                line,
            });
        }
    }
    let mut warnings = Vec::new();
    let pairs = gt
        .iter()
        .map(|(&(image_id, class_id), &ground_truth)| {
            let predicted = pred.get(&(image_id, class_id)).copied().unwrap_or_else(|| {
                let w = format!("no prediction for image {image_id} class {class_id}; using 0");
                log::warn!("{w}");
                warnings.push(w);
                0.0
            });
            CountPair {
                image_id,
                class_id,
                ground_truth,
                predicted,
            }
        })
        .collect();
    Ok(LoadedPredictions { pairs, warnings })
}

pub fn load_predictions(path: &Path, gt: &GroundTruth) -> Result<LoadedPredictions> {
    let text = std::fs::read_to_string(path).at(path)?;
    parse_predictions(&text, gt)
}

/// Most common over least common counted class, using classes with at
/// least one annotation.
pub fn class_imbalance(annotations: &[AnnotationRecord]) -> Result<f64> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for a in annotations.iter().filter(|a| !a.is_distractor) {
        *counts.entry(a.class_id).or_default() += 1;
    }
    imbalance_of(counts.values().copied())
}

pub fn imbalance_of(counts: impl IntoIterator<Item = usize>) -> Result<f64> {
    let (lo, hi) = counts
        .into_iter()
        .filter(|&c| c > 0)
        .fold((usize::MAX, 0), |(lo, hi), c| (lo.min(c), hi.max(c)));
    if hi == 0 {
        return Err(Error::NoCountedInstances);
    }
    Ok(hi as f64 / lo as f64)
}

/// Fixed-edge histogram; the last bin also takes values at its upper edge
/// and `overflow` counts values past it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub underflow: usize,
    pub overflow: usize,
}

impl Histogram {
    pub fn new(edges: Vec<f64>) -> Histogram {
        let bins = edges.len() - 1;
        Histogram {
            edges,
            counts: vec![0; bins],
            underflow: 0,
            overflow: 0,
        }
    }

    pub fn uniform(lo: f64, hi: f64, bins: usize) -> Histogram {
        Histogram::new((0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect())
    }

    pub fn add(&mut self, v: f64) {
        let last = *self.edges.last().expect("edges");
        if v < self.edges[0] {
            self.underflow += 1;
        } else if v > last {
            self.overflow += 1;
        } else {
            let k = self
                .edges
                .partition_point(|&e| e <= v)
                .saturating_sub(1)
                .min(self.counts.len() - 1);
            self.counts[k] += 1;
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.underflow + self.overflow
    }

    pub fn populated_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

/// What the summary needs from one manifest entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneStats {
    pub scene_index: u64,
    pub split: SplitLabel,
    pub ok: bool,
    /// Annotated counted instances per class id.
    pub class_counts: BTreeMap<u32, usize>,
    pub distractors: usize,
    pub total_ms: Option<f64>,
}

impl SceneStats {
    pub fn counted_total(&self) -> usize {
        self.class_counts.values().sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitTally {
    pub scenes: usize,
    pub classes: usize,
    pub objects: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub scenes: usize,
    pub ok: usize,
    pub discarded: usize,
    pub objects: usize,
    pub distractors: usize,
    pub mean_objects_per_scene: f64,
    pub min_objects: usize,
    pub max_objects: usize,
    pub count_histogram: Histogram,
    pub imbalance_histogram: Histogram,
    pub min_imbalance: f64,
    pub mean_imbalance: f64,
    /// Number of counted classes -> scenes.
    pub class_count_frequencies: BTreeMap<usize, usize>,
    pub per_split: BTreeMap<SplitLabel, SplitTally>,
    pub mean_scene_ms: Option<f64>,
}

pub fn dataset_summary(scenes: &[SceneStats]) -> SummaryStats {
    let mut count_histogram = Histogram::uniform(0.0, 200.0, 20);
    let mut imbalance_histogram = Histogram::uniform(1.0, 10.0, 18);
    let mut class_count_frequencies = BTreeMap::new();
    let mut per_split: BTreeMap<SplitLabel, SplitTally> = BTreeMap::new();
    let mut imbalances = Vec::new();
    let (mut objects, mut distractors, mut lo, mut hi) = (0, 0, usize::MAX, 0);
    let ok: Vec<&SceneStats> = scenes.iter().filter(|s| s.ok).collect();
    for s in &ok {
        let total = s.counted_total();
        objects += total;
        distractors += s.distractors;
        lo = lo.min(total);
        hi = hi.max(total);
        count_histogram.add(total as f64);
        let classes = s.class_counts.values().filter(|&&c| c > 0).count();
        *class_count_frequencies.entry(classes).or_insert(0) += 1;
        if let Ok(r) = imbalance_of(s.class_counts.values().copied()) {
            imbalance_histogram.add(r);
            imbalances.push(r);
        }
        let t = per_split.entry(s.split).or_default();
        t.scenes += 1;
        t.classes += classes;
        t.objects += total;
    }
    let timed: Vec<f64> = ok.iter().filter_map(|s| s.total_ms).collect();
    SummaryStats {
        scenes: scenes.len(),
        ok: ok.len(),
        discarded: scenes.len() - ok.len(),
        objects,
        distractors,
        mean_objects_per_scene: if ok.is_empty() {
            0.0
        } else {
            objects as f64 / ok.len() as f64
        },
        min_objects: if ok.is_empty() { 0 } else { lo },
        max_objects: hi,
        count_histogram,
        imbalance_histogram,
        min_imbalance: if imbalances.is_empty() {
            0.0
        } else {
            imbalances.iter().copied().fold(f64::INFINITY, f64::min)
        },
        mean_imbalance: if imbalances.is_empty() {
            0.0
        } else {
            imbalances.iter().sum::<f64>() / imbalances.len() as f64
        },
        class_count_frequencies,
        per_split,
        mean_scene_ms: (!timed.is_empty()).then(|| timed.iter().sum::<f64>() / timed.len() as f64),
    }
}
