//! Generator configuration.
//!
//! The on-disk format is flat `key = value` text, one entry per line, with
//! `#` starting a comment. Values are integers, reals, booleans, bare or
//! quoted strings, or bracketed lists such as `[30, 200]`. Absent keys keep
//! their defaults; unknown keys are rejected. Geometric keys documented as
//! "x s" are multiples of the global scene scale.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

/// Which side of the visibility threshold triggers removal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Remove when `occ >= threshold`.
    Occlusion,
    /// Remove when `v < threshold`.
    Visibility,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExemplarScoring {
    /// `v * area`, normalized per class and image.
    VisibilitySize,
    /// `area` only.
    Size,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub master_seed: u64,
    pub scene_count: u64,
    pub resolution: usize,
    pub scene_scale: f64,
    pub output_dir: PathBuf,
    pub split_ratios: [f64; 3],
    pub workers: usize,
    pub record_timings: bool,
    pub max_scene_attempts: u32,

    pub catalog_size: usize,
    pub exemplar_resolution: usize,

    pub count_range: [i64; 2],
    pub class_count_range: [i64; 2],
    /// x s
    pub target_size_range: [f64; 2],
    pub scale_jitter_range: [f64; 2],
    /// resized / same-category / other-category
    pub derivation_probabilities: [f64; 3],
    pub size_variant_factor_range: [f64; 2],
    /// x s
    pub spawn_margin: f64,
    /// x s
    pub spawn_height_range: [f64; 2],
    /// x s
    pub spawn_xy_range: [f64; 2],

    pub container_probability: f64,
    /// x s, per axis
    pub container_half_extent_range: [f64; 2],
    /// x s
    pub container_height_range: [f64; 2],
    /// x s
    pub floor_half_extent_range: [f64; 2],
    pub floor_uv_scale_range: [f64; 2],

    pub distractor_count_range: [i64; 2],
    /// x s
    pub distractor_base_size: f64,
    pub distractor_size_multiplier_range: [f64; 2],
    /// x s
    pub distractor_margin: f64,
    /// x s
    pub distractor_region: f64,
    pub distractor_attempts: u32,

    pub settle_max_steps: u32,
    pub settle_substeps: u32,
    pub settle_solver_iterations: u32,
    pub gravity: f64,
    /// x s
    pub penetration_tolerance: f64,

    pub elevation_range_deg: [f64; 2],
    pub roll_range_deg: [f64; 2],
    pub camera_distance_factor: f64,
    pub radius_jitter: f64,
    pub look_at_jitter: f64,
    pub vertical_fov_deg: f64,

    pub light_count_range: [i64; 2],
    pub light_intensity_range: [f64; 2],
    pub ambient_range: [f64; 2],
    pub rgb_supersample: bool,

    pub visibility_threshold: f64,
    pub visibility_rule: ThresholdRule,
    pub exemplar_scoring: ExemplarScoring,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            scene_count: 100,
            resolution: 1024,
            scene_scale: 10.0,
            output_dir: PathBuf::from("output"),
            split_ratios: [56.0 / 58.0, 1.0 / 58.0, 1.0 / 58.0],
            workers: 0,
            record_timings: true,
            max_scene_attempts: 5,

            catalog_size: 1522,
            exemplar_resolution: 256,

            count_range: [30, 200],
            class_count_range: [2, 4],
            target_size_range: [0.045, 0.12],
            scale_jitter_range: [0.98, 1.02],
            derivation_probabilities: [0.3, 0.5, 0.2],
            size_variant_factor_range: [1.25, 1.75],
            spawn_margin: 0.04,
            spawn_height_range: [0.1, 1.5],
            spawn_xy_range: [-0.3, 0.3],

            container_probability: 0.7,
            container_half_extent_range: [0.25, 0.4],
            container_height_range: [0.02, 0.05],
            floor_half_extent_range: [1.5, 2.5],
            floor_uv_scale_range: [0.04, 0.1],

            distractor_count_range: [2, 8],
            distractor_base_size: 0.7,
            distractor_size_multiplier_range: [0.5, 1.2],
            distractor_margin: 0.02,
            distractor_region: 0.9,
            distractor_attempts: 100,

            settle_max_steps: 300,
            settle_substeps: 2,
            settle_solver_iterations: 4,
            gravity: 9.81,
            penetration_tolerance: 0.001,

            elevation_range_deg: [20.0, 80.0],
            roll_range_deg: [-15.0, 15.0],
            camera_distance_factor: 1.2,
            radius_jitter: 0.15,
            look_at_jitter: 0.05,
            vertical_fov_deg: 50.0,

            light_count_range: [1, 3],
            light_intensity_range: [0.5, 1.3],
            ambient_range: [0.08, 0.3],
            rgb_supersample: false,

            visibility_threshold: 0.4,
            visibility_rule: ThresholdRule::Occlusion,
            exemplar_scoring: ExemplarScoring::VisibilitySize,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Num(f64, bool),
    Bool(bool),
    Str(String),
    List(Vec<Value>),
}

fn parse_scalar(text: &str) -> std::result::Result<Value, String> {
    let t = text.trim();
    if t.is_empty() {
        return Err("missing value".into());
    }
    if let Some(inner) = t.strip_prefix('"') {
        return inner
            .strip_suffix('"')
            .map(|s| Value::Str(s.to_owned()))
            .ok_or_else(|| "unterminated string".to_string());
    }
    match t {
        "true" => return Ok(Value::Bool(true)),
        "false" => return Ok(Value::Bool(false)),
        _ => {}
    }
    if let Ok(i) = t.parse::<i64>() {
        return Ok(Value::Num(i as f64, true));
    }
    if let Ok(f) = t.parse::<f64>() {
        return Ok(Value::Num(f, false));
    }
    if t.chars().any(|c| c.is_whitespace() || c == '[' || c == ']' || c == ',') {
        return Err(format!("cannot parse `{t}`"));
    }
    Ok(Value::Str(t.to_owned()))
}

fn parse_value(text: &str) -> std::result::Result<Value, String> {
    let t = text.trim();
    if let Some(inner) = t.strip_prefix('[') {
        let inner = inner.strip_suffix(']').ok_or("unterminated list")?;
        if inner.trim().is_empty() {
            return Ok(Value::List(Vec::new()));
        }
        return inner
            .split(',')
            .map(parse_scalar)
            .collect::<std::result::Result<_, _>>()
            .map(Value::List);
    }
    parse_scalar(t)
}

fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_str = !in_str,
            '#' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}

struct Field<'a> {
    key: &'a str,
    value: Value,
}

impl Field<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::ConfigValidation {
            key: self.key.to_owned(),
            message: message.into(),
        }
    }

    fn real(&self) -> Result<f64> {
        match self.value {
            Value::Num(x, _) => Ok(x),
            _ => Err(self.err("expected a number")),
        }
    }

    fn uint(&self) -> Result<u64> {
        match self.value {
            Value::Num(x, true) if x >= 0.0 => Ok(x as u64),
            _ => Err(self.err("expected a non-negative integer")),
        }
    }

    fn boolean(&self) -> Result<bool> {
        match self.value {
            Value::Bool(b) => Ok(b),
            _ => Err(self.err("expected true or false")),
        }
    }

    fn string(&self) -> Result<String> {
        match &self.value {
            Value::Str(s) => Ok(s.clone()),
            _ => Err(self.err("expected a string")),
        }
    }

    fn reals<const N: usize>(&self) -> Result<[f64; N]> {
        let Value::List(items) = &self.value else {
            return Err(self.err(format!("expected a list of {N} numbers")));
        };
        if items.len() != N {
            return Err(self.err(format!("expected {N} elements, got {}", items.len())));
        }
        let mut out = [0.0; N];
        for (slot, item) in out.iter_mut().zip(items) {
            match item {
                Value::Num(x, _) => *slot = *x,
                _ => return Err(self.err("list elements must be numbers")),
            }
        }
        Ok(out)
    }

    fn ints(&self) -> Result<[i64; 2]> {
        let Value::List(items) = &self.value else {
            return Err(self.err("expected a list of 2 integers"));
        };
        match items.as_slice() {
            [Value::Num(a, true), Value::Num(b, true)] => Ok([*a as i64, *b as i64]),
            _ => Err(self.err("expected a list of 2 integers")),
        }
    }
}

impl GeneratorConfig {
    /// Parses config text; absent keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let line_no = lineno + 1;
            let (key, value) = line.split_once('=').ok_or_else(|| Error::ConfigParse {
                line: line_no,
                message: "expected `key = value`".into(),
            })?;
            let key = key.trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(Error::ConfigParse {
                    line: line_no,
                    message: format!("invalid key `{key}`"),
                });
            }
            if !seen.insert(key.to_owned()) {
                return Err(Error::ConfigParse {
                    line: line_no,
                    message: format!("duplicate key `{key}`"),
                });
            }
            let value = parse_value(value).map_err(|message| Error::ConfigParse { line: line_no, message })?;
            cfg.apply(&Field { key, value })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, f: &Field<'_>) -> Result<()> {
        match f.key {
            "master_seed" => self.master_seed = f.uint()?,
            "scene_count" => self.scene_count = f.uint()?,
            "resolution" => self.resolution = f.uint()? as usize,
            "scene_scale" => self.scene_scale = f.real()?,
            "output_dir" => self.output_dir = PathBuf::from(f.string()?),
            "split_ratios" => self.split_ratios = f.reals()?,
            "workers" => self.workers = f.uint()? as usize,
            "record_timings" => self.record_timings = f.boolean()?,
            "max_scene_attempts" => self.max_scene_attempts = f.uint()? as u32,
            "catalog_size" => self.catalog_size = f.uint()? as usize,
            "exemplar_resolution" => self.exemplar_resolution = f.uint()? as usize,
            "count_range" => self.count_range = f.ints()?,
            "class_count_range" => self.class_count_range = f.ints()?,
            "target_size_range" => self.target_size_range = f.reals()?,
            "scale_jitter_range" => self.scale_jitter_range = f.reals()?,
            "derivation_probabilities" => self.derivation_probabilities = f.reals()?,
            "size_variant_factor_range" => self.size_variant_factor_range = f.reals()?,
            "spawn_margin" => self.spawn_margin = f.real()?,
            "spawn_height_range" => self.spawn_height_range = f.reals()?,
            "spawn_xy_range" => self.spawn_xy_range = f.reals()?,
            "container_probability" => self.container_probability = f.real()?,
            "container_half_extent_range" => self.container_half_extent_range = f.reals()?,
            "container_height_range" => self.container_height_range = f.reals()?,
            "floor_half_extent_range" => self.floor_half_extent_range = f.reals()?,
            "floor_uv_scale_range" => self.floor_uv_scale_range = f.reals()?,
            "distractor_count_range" => self.distractor_count_range = f.ints()?,
            "distractor_base_size" => self.distractor_base_size = f.real()?,
            "distractor_size_multiplier_range" => self.distractor_size_multiplier_range = f.reals()?,
            "distractor_margin" => self.distractor_margin = f.real()?,
            "distractor_region" => self.distractor_region = f.real()?,
            "distractor_attempts" => self.distractor_attempts = f.uint()? as u32,
            "settle_max_steps" => self.settle_max_steps = f.uint()? as u32,
            "settle_substeps" => self.settle_substeps = f.uint()? as u32,
            "settle_solver_iterations" => self.settle_solver_iterations = f.uint()? as u32,
            "gravity" => self.gravity = f.real()?,
            "penetration_tolerance" => self.penetration_tolerance = f.real()?,
            "elevation_range_deg" => self.elevation_range_deg = f.reals()?,
            "roll_range_deg" => self.roll_range_deg = f.reals()?,
            "camera_distance_factor" => self.camera_distance_factor = f.real()?,
            "radius_jitter" => self.radius_jitter = f.real()?,
            "look_at_jitter" => self.look_at_jitter = f.real()?,
            "vertical_fov_deg" => self.vertical_fov_deg = f.real()?,
            "light_count_range" => self.light_count_range = f.ints()?,
            "light_intensity_range" => self.light_intensity_range = f.reals()?,
            "ambient_range" => self.ambient_range = f.reals()?,
            "rgb_supersample" => self.rgb_supersample = f.boolean()?,
            "visibility_threshold" => self.visibility_threshold = f.real()?,
            "visibility_rule" => {
                self.visibility_rule = match f.string()?.as_str() {
                    "occlusion" => ThresholdRule::Occlusion,
                    "visibility" => ThresholdRule::Visibility,
                    other => return Err(f.err(format!("unknown rule `{other}`"))),
                }
            }
            "exemplar_scoring" => {
                self.exemplar_scoring = match f.string()?.as_str() {
                    "visibility_size" => ExemplarScoring::VisibilitySize,
                    "size" => ExemplarScoring::Size,
                    other => return Err(f.err(format!("unknown scoring `{other}`"))),
                }
            }
            _ => return Err(f.err("unknown key")),
        }
        Ok(())
    }

    /// Checks every cross-field invariant.
    pub fn validate(&self) -> Result<()> {
        fn bad(key: &str, message: impl Into<String>) -> Error {
            Error::ConfigValidation {
                key: key.to_owned(),
                message: message.into(),
            }
        }
        let real_ranges: [(&str, [f64; 2]); 14] = [
            ("target_size_range", self.target_size_range),
            ("scale_jitter_range", self.scale_jitter_range),
            ("size_variant_factor_range", self.size_variant_factor_range),
            ("spawn_height_range", self.spawn_height_range),
            ("spawn_xy_range", self.spawn_xy_range),
            ("container_half_extent_range", self.container_half_extent_range),
            ("container_height_range", self.container_height_range),
            ("floor_half_extent_range", self.floor_half_extent_range),
            ("floor_uv_scale_range", self.floor_uv_scale_range),
            (
                "distractor_size_multiplier_range",
                self.distractor_size_multiplier_range,
            ),
            ("elevation_range_deg", self.elevation_range_deg),
            ("roll_range_deg", self.roll_range_deg),
            ("light_intensity_range", self.light_intensity_range),
            ("ambient_range", self.ambient_range),
        ];
        for (key, [lo, hi]) in real_ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(bad(key, format!("range low {lo} exceeds high {hi}")));
            }
        }
        let int_ranges = [
            ("count_range", self.count_range),
            ("class_count_range", self.class_count_range),
            ("distractor_count_range", self.distractor_count_range),
            ("light_count_range", self.light_count_range),
        ];
        for (key, [lo, hi]) in int_ranges {
            if lo > hi {
                return Err(bad(key, format!("range low {lo} exceeds high {hi}")));
            }
            if lo < 0 {
                return Err(bad(key, "range must be non-negative"));
            }
        }
        if self.count_range[0] < 1 {
            return Err(bad("count_range", "at least one object is required"));
        }
        if self.class_count_range[0] < 1 {
            return Err(bad("class_count_range", "at least one class is required"));
        }
        if self.light_count_range[0] < 1 {
            return Err(bad("light_count_range", "at least one light is required"));
        }
        if !(self.visibility_threshold > 0.0 && self.visibility_threshold < 1.0) {
            return Err(bad("visibility_threshold", "must lie in (0, 1)"));
        }
        if self.resolution < 64 {
            return Err(bad("resolution", "must be at least 64"));
        }
        if self.exemplar_resolution < 16 {
            return Err(bad("exemplar_resolution", "must be at least 16"));
        }
        if self.split_ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(bad("split_ratios", "ratios must lie in [0, 1]"));
        }
        if (self.split_ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(bad("split_ratios", "ratios must sum to 1"));
        }
        let probs = self.derivation_probabilities;
        if probs.iter().any(|p| *p < 0.0) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(bad("derivation_probabilities", "must be non-negative and sum to 1"));
        }
        if !(0.0..=1.0).contains(&self.container_probability) {
            return Err(bad("container_probability", "must lie in [0, 1]"));
        }
        if !(self.scene_scale > 0.0 && self.scene_scale.is_finite()) {
            return Err(bad("scene_scale", "must be positive"));
        }
        if self.size_variant_factor_range[0] <= 1.1 {
            return Err(bad("size_variant_factor_range", "factors must exceed 1.1"));
        }
        if self.target_size_range[0] <= 0.0 {
            return Err(bad("target_size_range", "sizes must be positive"));
        }
        if self.container_half_extent_range[0] <= 0.0 || self.container_height_range[0] <= 0.0 {
            return Err(bad("container_half_extent_range", "container scales must be positive"));
        }
        if self.floor_half_extent_range[0] <= 0.0 {
            return Err(bad("floor_half_extent_range", "floor must have positive extent"));
        }
        if self.settle_max_steps < 1 {
            return Err(bad("settle_max_steps", "must be at least 1"));
        }
        if self.penetration_tolerance <= 0.0 {
            return Err(bad("penetration_tolerance", "must be positive"));
        }
        if !(self.vertical_fov_deg > 1.0 && self.vertical_fov_deg < 170.0) {
            return Err(bad("vertical_fov_deg", "must lie in (1, 170)"));
        }
        if self.max_scene_attempts < 1 {
            return Err(bad("max_scene_attempts", "must be at least 1"));
        }
        if self.radius_jitter < 0.0 || self.radius_jitter >= 1.0 {
            return Err(bad("radius_jitter", "must lie in [0, 1)"));
        }
        if self.look_at_jitter < 0.0 {
            return Err(bad("look_at_jitter", "must be non-negative"));
        }
        if self.camera_distance_factor <= 0.0 {
            return Err(bad("camera_distance_factor", "must be positive"));
        }
        Ok(())
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn to_text(&self) -> String {
        fn list<T: std::fmt::Debug>(v: &[T]) -> String {
            let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
            format!("[{}]", items.join(", "))
        }
        let rule = match self.visibility_rule {
            ThresholdRule::Occlusion => "occlusion",
            ThresholdRule::Visibility => "visibility",
        };
        let scoring = match self.exemplar_scoring {
            ExemplarScoring::VisibilitySize => "visibility_size",
            ExemplarScoring::Size => "size",
        };
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("master_seed", self.master_seed.to_string());
        kv("scene_count", self.scene_count.to_string());
        kv("resolution", self.resolution.to_string());
        kv("scene_scale", format!("{:?}", self.scene_scale));
        kv("output_dir", format!("{:?}", self.output_dir.to_string_lossy()));
        kv("split_ratios", list(&self.split_ratios));
        kv("workers", self.workers.to_string());
        kv("record_timings", self.record_timings.to_string());
        kv("max_scene_attempts", self.max_scene_attempts.to_string());
        kv("catalog_size", self.catalog_size.to_string());
        kv("exemplar_resolution", self.exemplar_resolution.to_string());
        kv("count_range", list(&self.count_range));
        kv("class_count_range", list(&self.class_count_range));
        kv("target_size_range", list(&self.target_size_range));
        kv("scale_jitter_range", list(&self.scale_jitter_range));
        kv("derivation_probabilities", list(&self.derivation_probabilities));
        kv("size_variant_factor_range", list(&self.size_variant_factor_range));
        kv("spawn_margin", format!("{:?}", self.spawn_margin));
        kv("spawn_height_range", list(&self.spawn_height_range));
        kv("spawn_xy_range", list(&self.spawn_xy_range));
        kv("container_probability", format!("{:?}", self.container_probability));
        kv("container_half_extent_range", list(&self.container_half_extent_range));
        kv("container_height_range", list(&self.container_height_range));
        kv("floor_half_extent_range", list(&self.floor_half_extent_range));
        kv("floor_uv_scale_range", list(&self.floor_uv_scale_range));
        kv("distractor_count_range", list(&self.distractor_count_range));
        kv("distractor_base_size", format!("{:?}", self.distractor_base_size));
        kv(
            "distractor_size_multiplier_range",
            list(&self.distractor_size_multiplier_range),
        );
        kv("distractor_margin", format!("{:?}", self.distractor_margin));
        kv("distractor_region", format!("{:?}", self.distractor_region));
        kv("distractor_attempts", self.distractor_attempts.to_string());
        kv("settle_max_steps", self.settle_max_steps.to_string());
        kv("settle_substeps", self.settle_substeps.to_string());
        kv("settle_solver_iterations", self.settle_solver_iterations.to_string());
        kv("gravity", format!("{:?}", self.gravity));
        kv("penetration_tolerance", format!("{:?}", self.penetration_tolerance));
        kv("elevation_range_deg", list(&self.elevation_range_deg));
        kv("roll_range_deg", list(&self.roll_range_deg));
        kv("camera_distance_factor", format!("{:?}", self.camera_distance_factor));
        kv("radius_jitter", format!("{:?}", self.radius_jitter));
        kv("look_at_jitter", format!("{:?}", self.look_at_jitter));
        kv("vertical_fov_deg", format!("{:?}", self.vertical_fov_deg));
        kv("light_count_range", list(&self.light_count_range));
        kv("light_intensity_range", list(&self.light_intensity_range));
        kv("ambient_range", list(&self.ambient_range));
        kv("rgb_supersample", self.rgb_supersample.to_string());
        kv("visibility_threshold", format!("{:?}", self.visibility_threshold));
        kv("visibility_rule", rule.to_owned());
        kv("exemplar_scoring", scoring.to_owned());
        s
    }

    /// Hash of everything that influences generated content.
    ///
    /// Excludes keys that only affect scheduling or location of the output.
    pub fn content_hash(&self) -> u64 {
        let mut c = self.clone();
        c.workers = 0;
        c.output_dir = PathBuf::new();
        c.scene_count = 0;
        crate::rng::stable_hash(c.to_text().as_bytes())
    }

    /// Multiplies by the scene scale.
    pub fn scaled(&self, x: f64) -> f64 {
        x * self.scene_scale
    }

    pub fn scaled_range(&self, r: [f64; 2]) -> [f64; 2] {
        [r[0] * self.scene_scale, r[1] * self.scene_scale]
    }
}

/// Reads and validates a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<GeneratorConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).at(path)?;
    GeneratorConfig::parse(&text)
}
