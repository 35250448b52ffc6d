//! Templated three-tier descriptions.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{AlbedoParams, Finish, ObjectTemplate, Pattern};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DescriptionTriple {
    pub short: String,
    pub concise: String,
    pub detailed: String,
}

impl DescriptionTriple {
    /// Prefixes every tier, e.g. with "Larger".
    pub fn prefixed(&self, word: &str) -> DescriptionTriple {
        DescriptionTriple {
            short: format!("{word} {}", self.short),
            concise: format!("{word} {}", self.concise),
            detailed: format!("{word} {}", self.detailed),
        }
    }
}

fn pattern_clause(albedo: &AlbedoParams) -> String {
    let second = albedo.secondary.name();
    match albedo.pattern {
        Pattern::Solid => format!("with a plain {} surface", albedo.primary.name()),
        Pattern::Stripes { bands } if bands <= 4 => format!("with wide {second} stripes"),
        Pattern::Stripes { .. } => format!("with thin {second} stripes"),
        Pattern::Checker { cells } if cells <= 4 => format!("with a coarse {second} checker pattern"),
        Pattern::Checker { .. } => format!("with a fine {second} checker pattern"),
        Pattern::Dots { .. } => format!("with {second} polka dots"),
    }
}

fn finish_clause(albedo: &AlbedoParams) -> &'static str {
    match albedo.finish {
        Finish::Matte => "matte finish",
        Finish::Satin => "satin finish",
        Finish::Glossy => "glossy finish",
    }
}

fn accent_clause(t: &ObjectTemplate) -> Option<String> {
    use super::Category::*;
    let accent = t.albedo.secondary.name();
    match t.category {
        Bottle => Some(format!("{accent} cap")),
        Figurine => Some(format!("{accent} base")),
        Mushroom => Some(format!("{accent} stem")),
        _ => None,
    }
}

/// Builds the raw triple of a template (no uniqueness suffix).
///
/// `short` is "{color} {noun}"; `concise` adds the surface clause;
/// `detailed` adds shape and finish clauses on top of that.
pub fn describe(t: &ObjectTemplate) -> DescriptionTriple {
    let short = format!("{} {}", t.albedo.primary.name(), t.category.noun());
    let concise = format!("{short} {}", pattern_clause(&t.albedo));
    let mut detailed = format!("{concise}, {}", t.shape.shape_clause());
    if let Some(accent) = accent_clause(t) {
        detailed.push_str(&format!(", a {accent}"));
    }
    detailed.push_str(&format!(" and a {}", finish_clause(&t.albedo)));
    DescriptionTriple {
        short,
        concise,
        detailed,
    }
}

/// Enforces per-tier uniqueness across a catalog by appending "variant k"
/// on collision. Registration order decides who keeps the plain string.
#[derive(Debug, Default)]
pub struct DescriptionRegistry {
    short: HashSet<String>,
    concise: HashSet<String>,
    detailed: HashSet<String>,
}

fn uniquify(set: &mut HashSet<String>, s: String) -> String {
    if set.insert(s.clone()) {
        return s;
    }
    let mut k = 2;
    loop {
        let cand = format!("{s} variant {k}");
        if set.insert(cand.clone()) {
            return cand;
        }
        k += 1;
    }
}

impl DescriptionRegistry {
    pub fn register(&mut self, raw: DescriptionTriple) -> DescriptionTriple {
        DescriptionTriple {
            short: uniquify(&mut self.short, raw.short),
            concise: uniquify(&mut self.concise, raw.concise),
            detailed: uniquify(&mut self.detailed, raw.detailed),
        }
    }
}
