//! PBR material library: indexing `material.json` records, lexical TF-IDF
//! ranking, and per-part retrieval through the offline scorer or an oracle.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::imaging::{load_gray_png, load_rgb_png, GrayImage, ImageError, RgbImage};
use crate::oracle::{CatalogEntry, Oracle, OracleError, PartProposal};

pub const RECORD_FILE: &str = "material.json";
pub const DEFAULT_ROUGHNESS: f32 = 0.5;
pub const DEFAULT_METALLIC: f32 = 0.0;
/// Candidates passed to the oracle in oracle mode.
pub const ORACLE_CANDIDATES: usize = 20;

const DEFAULT_CATEGORY_MAP: &str = include_str!("../config/material_categories.json");

#[derive(Debug, Error)]
pub enum MaterialError {
    #[error("duplicate material id '{id}' in {first} and {second}")]
    DuplicateId { id: String, first: String, second: String },
    #[error("cannot read {path}: {msg}")]
    Unreadable { path: String, msg: String },
    #[error("material library is empty")]
    EmptyIndex,
    #[error("category '{0}' has no materials")]
    EmptyCategory(String),
    #[error("unknown material id '{0}'")]
    UnknownId(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

fn default_tile_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialMaps {
    pub albedo: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roughness: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metallic: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialRecord {
    pub id: String,
    pub category: String,
    pub description: String,
    /// Paths relative to `dir`.
    pub maps: MaterialMaps,
    /// UV multiplier applied before sampling the maps.
    #[serde(default = "default_tile_scale")]
    pub tile_scale: f64,
    /// Folder holding the record's `material.json`.
    #[serde(default, skip_serializing_if = "is_empty_path")]
    pub dir: PathBuf,
}

fn is_empty_path(p: &Path) -> bool {
    p.as_os_str().is_empty()
}

impl MaterialRecord {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }

    /// Loads the albedo map and the scalar maps, defaulting missing scalar
    /// maps to constants.
    pub fn load_textures(&self) -> Result<MaterialTextures, MaterialError> {
        let albedo = load_rgb_png(&self.resolve(&self.maps.albedo))?;
        let chan = |p: &Option<PathBuf>, d: f32| -> Result<Channel, MaterialError> {
            Ok(match p {
                Some(p) => Channel::Map(load_gray_png(&self.resolve(p))?),
                None => Channel::Constant(d),
            })
        };
        Ok(MaterialTextures {
            id: self.id.clone(),
            albedo,
            roughness: chan(&self.maps.roughness, DEFAULT_ROUGHNESS)?,
            metallic: chan(&self.maps.metallic, DEFAULT_METALLIC)?,
            tile_scale: self.tile_scale,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Channel {
    Constant(f32),
    Map(GrayImage),
}

impl Channel {
    pub fn sample(&self, u: f64, v: f64) -> f32 {
        match self {
            Channel::Constant(c) => *c,
            Channel::Map(m) => *m.sample_wrap(u, v),
        }
    }
}

/// Decoded maps of one material, ready for baking.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialTextures {
    pub id: String,
    pub albedo: RgbImage,
    pub roughness: Channel,
    pub metallic: Channel,
    pub tile_scale: f64,
}

impl MaterialTextures {
    /// A material with a 1×1 albedo and constant scalar maps.
    pub fn constant(id: &str, albedo: [f32; 3], roughness: f32, metallic: f32) -> Self {
        MaterialTextures {
            id: id.to_string(),
            albedo: RgbImage::filled(1, 1, albedo),
            roughness: Channel::Constant(roughness),
            metallic: Channel::Constant(metallic),
            tile_scale: 1.0,
        }
    }
}

/// Lowercased runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LibraryIndex {
    pub records: BTreeMap<String, MaterialRecord>,
    pub by_category: BTreeMap<String, Vec<String>>,
    pub token_index: BTreeMap<String, Vec<String>>,
}

impl LibraryIndex {
    pub fn from_records(records: impl IntoIterator<Item = MaterialRecord>) -> Result<Self, MaterialError> {
        let mut index = LibraryIndex::default();
        for r in records {
            if let Some(prev) = index.records.get(&r.id) {
                return Err(MaterialError::DuplicateId {
                    id: r.id.clone(),
                    first: prev.dir.join(RECORD_FILE).display().to_string(),
                    second: r.dir.join(RECORD_FILE).display().to_string(),
                });
            }
            index.records.insert(r.id.clone(), r);
        }
        for (id, r) in &index.records {
            index.by_category.entry(r.category.clone()).or_default().push(id.clone());
            let tokens: BTreeSet<String> = tokenize(&r.description).into_iter().collect();
            for t in tokens {
                index.token_index.entry(t).or_default().push(id.clone());
            }
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Result<&MaterialRecord, MaterialError> {
        self.records.get(id).ok_or_else(|| MaterialError::UnknownId(id.to_string()))
    }

    fn catalog(&self, category: Option<&str>) -> Result<Vec<CatalogEntry>, MaterialError> {
        if self.is_empty() {
            return Err(MaterialError::EmptyIndex);
        }
        let ids: Vec<&String> = match category {
            Some(c) => self
                .by_category
                .get(c)
                .filter(|v| !v.is_empty())
                .ok_or_else(|| MaterialError::EmptyCategory(c.to_string()))?
                .iter()
                .collect(),
            None => self.records.keys().collect(),
        };
        Ok(ids
            .into_iter()
            .map(|id| CatalogEntry { id: id.clone(), description: self.records[id].description.clone() })
            .collect())
    }
}

/// Reads every `material.json` under `root`, in sorted path order.
pub fn build_index(root: &Path) -> Result<LibraryIndex, MaterialError> {
    let unreadable = |path: &Path, msg: String| MaterialError::Unreadable { path: path.display().to_string(), msg };
    let mut records = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| unreadable(root, e.to_string()))?;
        if !entry.file_type().is_file() || entry.file_name() != RECORD_FILE {
            continue;
        }
        let path = entry.path();
        let text = std::fs::read_to_string(path).map_err(|e| unreadable(path, e.to_string()))?;
        let mut r: MaterialRecord = serde_json::from_str(&text).map_err(|e| unreadable(path, e.to_string()))?;
        r.dir = path.parent().unwrap_or(root).to_path_buf();
        records.push(r);
    }
    LibraryIndex::from_records(records)
}

fn term_frequencies(tokens: &[String]) -> BTreeMap<&str, f64> {
    let mut tf: BTreeMap<&str, f64> = BTreeMap::new();
    for t in tokens {
        *tf.entry(t.as_str()).or_default() += 1.0;
    }
    let n = tokens.len() as f64;
    tf.values_mut().for_each(|v| *v /= n);
    tf
}

/// TF-IDF cosine of `query` against every catalog description, highest
/// first, ties by id. TF is the count over document length; IDF is
/// `ln((1 + N) / (1 + df)) + 1` over the catalog.
pub fn rank_catalog(query: &str, catalog: &[CatalogEntry]) -> Vec<(String, f64)> {
    let docs: Vec<Vec<String>> = catalog.iter().map(|c| tokenize(&c.description)).collect();
    let n = docs.len() as f64;
    let mut df: BTreeMap<&str, f64> = BTreeMap::new();
    for d in &docs {
        for t in d.iter().map(String::as_str).collect::<BTreeSet<_>>() {
            *df.entry(t).or_default() += 1.0;
        }
    }
    let idf = |t: &str| ((1.0 + n) / (1.0 + df.get(t).copied().unwrap_or(0.0))).ln() + 1.0;
    let weights = |tokens: &[String]| -> BTreeMap<String, f64> {
        term_frequencies(tokens).into_iter().map(|(t, f)| (t.to_string(), f * idf(t))).collect()
    };
    let norm = |w: &BTreeMap<String, f64>| w.values().map(|v| v * v).sum::<f64>().sqrt();
    let q = weights(&tokenize(query));
    let qn = norm(&q);
    let mut ranked: Vec<(String, f64)> = catalog
        .iter()
        .zip(&docs)
        .map(|(c, d)| {
            let w = weights(d);
            let dn = norm(&w);
            let dot: f64 = q.iter().filter_map(|(t, qv)| w.get(t).map(|dv| qv * dv)).sum();
            let score = if qn > 0.0 && dn > 0.0 { (dot / (qn * dn)).clamp(0.0, 1.0) } else { 0.0 };
            (c.id.clone(), score)
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

/// Full ranking of the library (or one category) against `query`.
pub fn retrieve_offline(
    query: &str,
    index: &LibraryIndex,
    category: Option<&str>,
) -> Result<Vec<(String, f64)>, MaterialError> {
    Ok(rank_catalog(query, &index.catalog(category)?))
}

/// Material class → library category, matched case-insensitively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryMap(pub BTreeMap<String, String>);

impl Default for CategoryMap {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_CATEGORY_MAP).expect("bundled category map is valid")
    }
}

impl CategoryMap {
    pub fn load(path: &Path) -> Result<Self, MaterialError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| MaterialError::Unreadable { path: path.display().to_string(), msg: e.to_string() })?;
        serde_json::from_str(&text)
            .map_err(|e| MaterialError::Unreadable { path: path.display().to_string(), msg: e.to_string() })
    }

    pub fn category_for(&self, material_class: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k.eq_ignore_ascii_case(material_class)).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalMode {
    Offline,
    Oracle,
}

pub fn part_query(part: &PartProposal) -> String {
    format!("{} {} {}", part.name, part.material, part.description)
}

/// Picks one library record for `part`. The part's material class selects
/// a category through `categories`; a mapped category with no members
/// falls back to the whole library.
pub fn retrieve<'a>(
    part: &PartProposal,
    index: &'a LibraryIndex,
    mode: RetrievalMode,
    oracle: Option<&dyn Oracle>,
    categories: &CategoryMap,
    context: &str,
) -> Result<&'a MaterialRecord, MaterialError> {
    if index.is_empty() {
        return Err(MaterialError::EmptyIndex);
    }
    let mut category = categories.category_for(&part.material);
    if let Some(c) = category {
        if index.by_category.get(c).map_or(true, Vec::is_empty) {
            log::warn!("category '{c}' for part '{}' has no materials; searching the whole library", part.name);
            category = None;
        }
    }
    let ranked = retrieve_offline(&part_query(part), index, category)?;
    let id = match (mode, oracle) {
        (RetrievalMode::Offline, _) => ranked[0].0.clone(),
        (RetrievalMode::Oracle, None) => {
            return Err(OracleError::Precondition("oracle mode without an oracle".into()).into())
        }
        (RetrievalMode::Oracle, Some(o)) => {
            let catalog: Vec<CatalogEntry> = ranked
                .iter()
                .take(ORACLE_CANDIDATES)
                .map(|(id, _)| CatalogEntry { id: id.clone(), description: index.records[id].description.clone() })
                .collect();
            let ctx = format!("category={};{context}", category.unwrap_or("all"));
            o.choose_material(part, &catalog, &ctx)?.chosen_material_id
        }
    };
    index.get(&id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, cat: &str, desc: &str) -> MaterialRecord {
        MaterialRecord {
            id: id.into(),
            category: cat.into(),
            description: desc.into(),
            maps: MaterialMaps { albedo: "albedo.png".into(), roughness: None, metallic: None, normal: None },
            tile_scale: 1.0,
            dir: PathBuf::new(),
        }
    }

    #[test]
    fn tokenizer_lowercases_and_splits() {
        assert_eq!(tokenize("Brushed metal, fine-scratches!"), ["brushed", "metal", "fine", "scratches"]);
        assert!(tokenize(" ,; ").is_empty());
    }

    #[test]
    fn zero_overlap_query_ranks_by_id() {
        let idx = LibraryIndex::from_records([rec("b", "x", "wood"), rec("a", "x", "metal")]).unwrap();
        let r = retrieve_offline("glass", &idx, None).unwrap();
        assert_eq!(r, vec![("a".to_string(), 0.0), ("b".to_string(), 0.0)]);
    }

    #[test]
    fn empty_index_and_category_errors() {
        let idx = LibraryIndex::default();
        assert!(matches!(retrieve_offline("x", &idx, None), Err(MaterialError::EmptyIndex)));
        let idx = LibraryIndex::from_records([rec("a", "metal", "steel")]).unwrap();
        assert!(matches!(retrieve_offline("x", &idx, Some("wood")), Err(MaterialError::EmptyCategory(_))));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let mut a = rec("steel", "metal", "x");
        a.dir = "lib/a".into();
        let mut b = rec("steel", "metal", "y");
        b.dir = "lib/b".into();
        let msg = LibraryIndex::from_records([a, b]).unwrap_err().to_string();
        assert!(msg.contains("lib/a/material.json") && msg.contains("lib/b/material.json"), "{msg}");
    }

    #[test]
    fn default_category_map() {
        let m = CategoryMap::default();
        assert_eq!(m.category_for("Metal"), Some("metal"));
        assert_eq!(m.category_for("wood"), Some("wood"));
        assert_eq!(m.category_for("Rubber"), None);
    }
}
