//! Procedural asset catalog: templates, descriptions, splits and the
//! external-exemplar renders.

mod describe;
mod exemplar;
mod shapes;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::config::GeneratorConfig;
use crate::error::{IoContext, Result};
use crate::geometry::{Aabb, MeshBvh, TriMesh};
use crate::rng::{derive_stream, stable_hash};

pub use describe::{describe, DescriptionRegistry, DescriptionTriple};
pub use exemplar::render_external_exemplar;
pub use shapes::{Category, ShapeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitLabel {
    Train,
    Val,
    Test,
}

impl SplitLabel {
    pub const ALL: [SplitLabel; 3] = [SplitLabel::Train, SplitLabel::Val, SplitLabel::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitLabel::Train => "train",
            SplitLabel::Val => "val",
            SplitLabel::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<SplitLabel> {
        SplitLabel::ALL.into_iter().find(|l| l.as_str() == s)
    }
}

impl std::fmt::Display for SplitLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Maps a key (template id, scene index) into a ratio bucket via its stable hash.
pub fn split_for_key(key: &str, ratios: [f64; 3]) -> SplitLabel {
    // FNV leaves the high bits of near-identical keys correlated; finalize first.
    let mut h = stable_hash(key.as_bytes());
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^= h >> 33;
    let u = (h >> 11) as f64 / (1u64 << 53) as f64;
    if u < ratios[0] {
        SplitLabel::Train
    } else if u < ratios[0] + ratios[1] {
        SplitLabel::Val
    } else {
        SplitLabel::Test
    }
}

pub fn assign_split(template_id: &str, split_ratios: [f64; 3]) -> SplitLabel {
    split_for_key(template_id, split_ratios)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorName {
    Red,
    Orange,
    Yellow,
    Lime,
    Green,
    Teal,
    Cyan,
    Blue,
    Navy,
    Purple,
    Magenta,
    Pink,
    Brown,
    Beige,
    Gray,
    Black,
    White,
}

impl ColorName {
    pub const ALL: [ColorName; 17] = [
        ColorName::Red,
        ColorName::Orange,
        ColorName::Yellow,
        ColorName::Lime,
        ColorName::Green,
        ColorName::Teal,
        ColorName::Cyan,
        ColorName::Blue,
        ColorName::Navy,
        ColorName::Purple,
        ColorName::Magenta,
        ColorName::Pink,
        ColorName::Brown,
        ColorName::Beige,
        ColorName::Gray,
        ColorName::Black,
        ColorName::White,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ColorName::Red => "red",
            ColorName::Orange => "orange",
            ColorName::Yellow => "yellow",
            ColorName::Lime => "lime",
            ColorName::Green => "green",
            ColorName::Teal => "teal",
            ColorName::Cyan => "cyan",
            ColorName::Blue => "blue",
            ColorName::Navy => "navy",
            ColorName::Purple => "purple",
            ColorName::Magenta => "magenta",
            ColorName::Pink => "pink",
            ColorName::Brown => "brown",
            ColorName::Beige => "beige",
            ColorName::Gray => "gray",
            ColorName::Black => "black",
            ColorName::White => "white",
        }
    }

    /// Linear reflectance.
    pub fn rgb(self) -> DVec3 {
        let c = match self {
            ColorName::Red => [0.78, 0.08, 0.07],
            ColorName::Orange => [0.90, 0.38, 0.05],
            ColorName::Yellow => [0.92, 0.80, 0.10],
            ColorName::Lime => [0.55, 0.85, 0.15],
            ColorName::Green => [0.10, 0.55, 0.15],
            ColorName::Teal => [0.05, 0.50, 0.48],
            ColorName::Cyan => [0.15, 0.78, 0.88],
            ColorName::Blue => [0.10, 0.25, 0.85],
            ColorName::Navy => [0.05, 0.08, 0.35],
            ColorName::Purple => [0.45, 0.12, 0.62],
            ColorName::Magenta => [0.85, 0.10, 0.65],
            ColorName::Pink => [0.95, 0.55, 0.70],
            ColorName::Brown => [0.42, 0.24, 0.10],
            ColorName::Beige => [0.85, 0.78, 0.60],
            ColorName::Gray => [0.50, 0.50, 0.50],
            ColorName::Black => [0.04, 0.04, 0.04],
            ColorName::White => [0.92, 0.92, 0.92],
        };
        DVec3::from_array(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pattern {
    Solid,
    Stripes { bands: u32 },
    Checker { cells: u32 },
    Dots { density: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Finish {
    Matte,
    Satin,
    Glossy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlbedoParams {
    pub primary: ColorName,
    pub secondary: ColorName,
    pub pattern: Pattern,
    pub finish: Finish,
}

impl AlbedoParams {
    fn sample(s: &mut crate::rng::RngStream) -> AlbedoParams {
        let primary = ColorName::ALL[s.index(ColorName::ALL.len())];
        let mut secondary = ColorName::ALL[s.index(ColorName::ALL.len())];
        if secondary == primary {
            secondary = if primary == ColorName::White {
                ColorName::Black
            } else {
                ColorName::White
            };
        }
        let pattern = match s.weighted(&[0.4, 0.25, 0.2, 0.15]) {
            0 => Pattern::Solid,
            1 => Pattern::Stripes {
                bands: s.int(2, 8).expect("static") as u32,
            },
            2 => Pattern::Checker {
                cells: s.int(2, 8).expect("static") as u32,
            },
            _ => Pattern::Dots {
                density: s.int(3, 7).expect("static") as u32,
            },
        };
        let finish = [Finish::Matte, Finish::Satin, Finish::Glossy][s.index(3)];
        AlbedoParams {
            primary,
            secondary,
            pattern,
            finish,
        }
    }

    /// Reflectance at a point of the unit-extent canonical mesh.
    pub fn color_at(&self, local: DVec3, part: u8, round: bool) -> DVec3 {
        if part == 1 {
            return self.secondary.rgb();
        }
        let (a, b) = (self.primary.rgb(), self.secondary.rgb());
        // Cylindrical coordinates around the z axis.
        let theta = local.y.atan2(local.x) / std::f64::consts::TAU + 0.5;
        let h = if round {
            (local.z / local.length().max(1e-9)).asin() / std::f64::consts::PI + 0.5
        } else {
            local.z + 0.5
        };
        let pick = match self.pattern {
            Pattern::Solid => false,
            Pattern::Stripes { bands } => ((h * bands as f64 * 2.0).floor() as i64) % 2 == 1,
            Pattern::Checker { cells } => {
                let i = (theta * cells as f64 * 2.0).floor() as i64;
                let j = (h * cells as f64).floor() as i64;
                (i + j).rem_euclid(2) == 1
            }
            Pattern::Dots { density } => {
                let n = density as f64;
                let u = (theta * n * 2.0).fract() - 0.5;
                let v = (h * n).fract() - 0.5;
                u * u + v * v < 0.09
            }
        };
        if pick {
            b
        } else {
            a
        }
    }
}

/// Geometry shared by every instance of a template.
#[derive(Debug)]
pub struct TemplateGeometry {
    pub mesh: TriMesh,
    pub bvh: MeshBvh,
    /// Vertices of the collision hull, in the unit canonical frame.
    pub hull_points: Vec<DVec3>,
    pub aabb: Aabb,
}

impl TemplateGeometry {
    pub fn new(mesh: TriMesh) -> Self {
        let bvh = MeshBvh::new(&mesh);
        let hull_points = if mesh.vertex_count() <= 512 {
            TriMesh::convex(&mesh.positions, 0).positions
        } else {
            Vec::new()
        };
        let aabb = mesh.aabb();
        Self {
            mesh,
            bvh,
            hull_points,
            aabb,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ObjectTemplate {
    pub template_id: String,
    pub category: Category,
    pub shape: ShapeParams,
    pub albedo: AlbedoParams,
    pub is_distractor_eligible: bool,
    pub descriptions: DescriptionTriple,
    pub split: SplitLabel,
    pub geometry: Arc<TemplateGeometry>,
}

impl ObjectTemplate {
    /// Builds template `index` of the catalog seeded by `master_seed`.
    ///
    /// Depends only on `(master_seed, index)`, so growing a catalog never
    /// changes earlier templates.
    pub fn generate(master_seed: u64, index: usize, split_ratios: [f64; 3]) -> ObjectTemplate {
        let category = Category::ALL[index % Category::ALL.len()];
        let mut s = derive_stream(master_seed, index as u64, "catalog/template");
        let shape = ShapeParams::sample(category, &mut s);
        let albedo = AlbedoParams::sample(&mut s);
        let template_id = format!("{}-{index:05}", category.noun());
        let split = assign_split(&template_id, split_ratios);
        let mut t = ObjectTemplate {
            template_id,
            category,
            shape,
            albedo,
            is_distractor_eligible: category != Category::Ring,
            descriptions: DescriptionTriple {
                short: String::new(),
                concise: String::new(),
                detailed: String::new(),
            },
            split,
            geometry: Arc::new(TemplateGeometry::new(shape.mesh())),
        };
        t.descriptions = describe(&t);
        t
    }
}

#[derive(Debug, Clone)]
pub struct AssetCatalog {
    pub templates: Vec<ObjectTemplate>,
}

/// Builds `size` templates, round-robin over the categories, with unique
/// descriptions per tier.
pub fn build_catalog_sized(master_seed: u64, size: usize, split_ratios: [f64; 3]) -> AssetCatalog {
    use rayon::prelude::*;
    let mut templates: Vec<ObjectTemplate> = (0..size)
        .into_par_iter()
        .map(|i| ObjectTemplate::generate(master_seed, i, split_ratios))
        .collect();
    let mut registry = DescriptionRegistry::default();
    for t in &mut templates {
        t.descriptions = registry.register(t.descriptions.clone());
    }
    AssetCatalog { templates }
}

/// Catalog for a generator config. Size is clamped up to the largest class
/// count so a scene can always be filled.
pub fn build_catalog(config: &GeneratorConfig) -> AssetCatalog {
    let size = config.catalog_size.max(config.class_count_range[1] as usize).max(1);
    build_catalog_sized(config.master_seed, size, config.split_ratios)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogManifestEntry {
    pub template_id: String,
    pub category: Category,
    pub split: SplitLabel,
    pub descriptions: DescriptionTriple,
    pub exemplar: String,
    pub shape: ShapeParams,
    pub albedo: AlbedoParams,
}

impl AssetCatalog {
    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn get(&self, template_id: &str) -> Option<&ObjectTemplate> {
        self.templates.iter().find(|t| t.template_id == template_id)
    }

    /// Template indices grouped by split.
    pub fn split_members(&self, split: SplitLabel) -> Vec<usize> {
        (0..self.templates.len())
            .filter(|&i| self.templates[i].split == split)
            .collect()
    }

    pub fn categories(&self) -> BTreeMap<Category, usize> {
        let mut m = BTreeMap::new();
        for t in &self.templates {
            *m.entry(t.category).or_insert(0) += 1;
        }
        m
    }

    pub fn exemplar_relpath(template_id: &str) -> String {
        format!("catalog/exemplars/{template_id}.png")
    }

    pub fn manifest(&self) -> Vec<CatalogManifestEntry> {
        self.templates
            .iter()
            .map(|t| CatalogManifestEntry {
                template_id: t.template_id.clone(),
                category: t.category,
                split: t.split,
                descriptions: t.descriptions.clone(),
                exemplar: Self::exemplar_relpath(&t.template_id),
                shape: t.shape,
                albedo: t.albedo,
            })
            .collect()
    }

    /// Writes `catalog/catalog.json` and one exemplar PNG per template under `root`.
    pub fn write(&self, root: &Path, exemplar_resolution: usize) -> Result<()> {
        use rayon::prelude::*;
        let dir = root.join("catalog/exemplars");
        std::fs::create_dir_all(&dir).at(&dir)?;
        self.templates.par_iter().try_for_each(|t| -> Result<()> {
            let path = root.join(Self::exemplar_relpath(&t.template_id));
            if path.exists() {
                return Ok(());
            }
            let img = render_external_exemplar(t, exemplar_resolution);
            let tmp = path.with_extension("png.tmp");
            img.save_with_format(&tmp, image::ImageFormat::Png).at(&tmp)?;
            std::fs::rename(&tmp, &path).at(&path)
        })?;
        let path = root.join("catalog/catalog.json");
        let json = serde_json::to_string_pretty(&self.manifest()).at(&path)?;
        std::fs::write(&path, json).at(&path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn paper_sized_catalog_is_unique_per_tier() {
        let cat = build_catalog_sized(0, 1522, GeneratorConfig::default().split_ratios);
        assert_eq!(cat.len(), 1522);
        let ids: HashSet<_> = cat.templates.iter().map(|t| &t.template_id).collect();
        assert_eq!(ids.len(), 1522);
        for tier in 0..3 {
            let set: HashSet<&str> = cat
                .templates
                .iter()
                .map(|t| match tier {
                    0 => t.descriptions.short.as_str(),
                    1 => t.descriptions.concise.as_str(),
                    _ => t.descriptions.detailed.as_str(),
                })
                .collect();
            assert_eq!(set.len(), 1522, "tier {tier}");
        }
        let cats = cat.categories();
        assert!(cats.len() >= 8);
        assert!(cats.values().all(|&n| n >= 4));
        for t in &cat.templates {
            assert!(!t.descriptions.short.is_empty());
            let e = t.geometry.aabb.extent().max_element();
            assert!((e - 1.0).abs() < 1e-6);
            assert!(!t.geometry.hull_points.is_empty());
        }
    }

    #[test]
    fn minimal_catalog_one_per_category() {
        let cat = build_catalog_sized(3, 8, [1.0, 0.0, 0.0]);
        let cats = cat.categories();
        assert_eq!(cats.len(), 8);
        assert!(cats.values().all(|&n| n == 1));
        let shorts: HashSet<_> = cat.templates.iter().map(|t| t.descriptions.short.clone()).collect();
        assert_eq!(shorts.len(), 8);
    }

    #[test]
    fn catalog_is_reproducible_and_prefix_stable() {
        let a = build_catalog_sized(42, 100, [0.8, 0.1, 0.1]);
        let b = build_catalog_sized(42, 100, [0.8, 0.1, 0.1]);
        let map = |c: &AssetCatalog| {
            c.templates
                .iter()
                .map(|t| (t.template_id.clone(), t.descriptions.clone()))
                .collect::<Vec<_>>()
        };
        assert_eq!(map(&a), map(&b));
        let bigger = build_catalog_sized(42, 150, [0.8, 0.1, 0.1]);
        assert_eq!(map(&a)[..], map(&bigger)[..100]);
    }

    #[test]
    fn splits() {
        let ids: Vec<String> = (0..1522).map(|i| format!("t-{i}")).collect();
        assert!(ids
            .iter()
            .all(|id| assign_split(id, [1.0, 0.0, 0.0]) == SplitLabel::Train));
        let ratios = [56.0 / 58.0, 1.0 / 58.0, 1.0 / 58.0];
        let cat = build_catalog_sized(0, 1522, ratios);
        let mut counts = [0usize; 3];
        for t in &cat.templates {
            counts[t.split as usize] += 1;
            assert_eq!(assign_split(&t.template_id, ratios), t.split);
        }
        // Every bucket's share within 5 points of its ratio; the large bucket
        // also within 5% of its expected count.
        for k in 0..3 {
            let share = counts[k] as f64 / 1522.0;
            assert!((share - ratios[k]).abs() <= 0.05, "{counts:?}");
        }
        let expect = ratios[0] * 1522.0;
        assert!((counts[0] as f64 - expect).abs() <= 0.05 * expect, "{counts:?}");
        for k in 1..3 {
            let mean = ratios[k] * 1522.0;
            let sd = (mean * (1.0 - ratios[k])).sqrt();
            assert!(
                counts[k] > 0 && (counts[k] as f64 - mean).abs() <= 4.0 * sd,
                "{counts:?}"
            );
        }
    }

    #[test]
    fn collision_gets_discriminator() {
        let t = ObjectTemplate::generate(0, 0, [1.0, 0.0, 0.0]);
        let mut reg = DescriptionRegistry::default();
        let first = reg.register(describe(&t));
        let second = reg.register(describe(&t));
        assert_eq!(first, describe(&t));
        assert_ne!(first.short, second.short);
        assert_ne!(first.concise, second.concise);
        assert_ne!(first.detailed, second.detailed);
        assert!(second.short.ends_with("variant 2"));
    }

    #[test]
    fn red_ball_description() {
        let mut t = ObjectTemplate::generate(0, 0, [1.0, 0.0, 0.0]);
        assert_eq!(t.category, Category::Ball);
        t.albedo.primary = ColorName::Red;
        let d = describe(&t);
        assert_eq!(d.short, "red ball");
        assert!(d.concise.len() > d.short.len() && d.concise.starts_with("red ball"));
        assert!(d.detailed.len() > d.concise.len());
        let extra = &d.detailed[d.concise.len()..];
        assert!(d.detailed.starts_with(&d.concise));
        assert!(extra.starts_with(", ") && extra.contains(" and a "), "{extra}");
    }
}
