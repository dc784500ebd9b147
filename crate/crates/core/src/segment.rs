//! Part segmentation: one global part list per asset, per-view masks from a
//! promptable segmenter, and the inspect-and-refine loop.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{connected_components, load_mask_png, save_mask_png, BinaryImage, Image, ImageError};
use crate::mesh::TriangleMesh;
use crate::oracle::{GridBox, Oracle, OracleError, PartProposal, Pixel, ViewParts, GRID_SIZE};
use crate::render::ViewBundle;

pub const DEFAULT_ROUNDS: usize = 3;
pub const MANIFEST_FILE: &str = "segmentation.json";

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("material conflict for part '{0}'")]
    MaterialConflict(String),
    #[error("no part proposals")]
    EmptyProposals,
    #[error("view '{stem}' proposes part '{part}' outside the global part list")]
    UnknownPart { stem: String, part: String },
    #[error("segmenter failure: {0}")]
    Segmenter(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad manifest {path}: {msg}")]
    Manifest { path: String, msg: String },
}

/// Pixel rectangle `[y0, y1) × [x0, x1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub y0: u32,
    pub x0: u32,
    pub y1: u32,
    pub x1: u32,
}

impl PixelRect {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }
}

fn scale_round(v: u32, num: usize, den: usize) -> u32 {
    ((v as f64 * num as f64) / den as f64).round() as u32
}

/// Maps a 1000-grid box to pixels: `y = round(ymin·H/1000)` and so on.
pub fn grid_to_pixels(b: GridBox, (w, h): (usize, usize)) -> PixelRect {
    let g = GRID_SIZE as usize;
    PixelRect {
        y0: scale_round(b.ymin, h, g),
        x0: scale_round(b.xmin, w, g),
        y1: scale_round(b.ymax, h, g),
        x1: scale_round(b.xmax, w, g),
    }
}

/// Inverse of [`grid_to_pixels`], rounding to the nearest grid unit.
pub fn pixels_to_grid(r: PixelRect, (w, h): (usize, usize)) -> GridBox {
    let g = GRID_SIZE as usize;
    let c = |v: u32, n: usize| scale_round(v, g, n).min(GRID_SIZE);
    GridBox { ymin: c(r.y0, h), xmin: c(r.x0, w), ymax: c(r.y1, h), xmax: c(r.x1, w) }
}

/// Smallest grid box whose pixel image under [`grid_to_pixels`] contains `r`.
/// Minima round down and maxima round up.
pub fn pixels_to_grid_covering(r: PixelRect, (w, h): (usize, usize)) -> GridBox {
    let g = GRID_SIZE as f64;
    let lo = |v: u32, n: usize| ((v as f64 * g / n as f64).floor() as u32).min(GRID_SIZE);
    let hi = |v: u32, n: usize| ((v as f64 * g / n as f64).ceil() as u32).min(GRID_SIZE);
    GridBox { ymin: lo(r.y0, h), xmin: lo(r.x0, w), ymax: hi(r.y1, h), xmax: hi(r.x1, w) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalPart {
    pub name: String,
    pub material: String,
    pub description: String,
}

impl GlobalPart {
    pub fn proposal(&self, bbox: Vec<GridBox>) -> PartProposal {
        PartProposal {
            name: self.name.clone(),
            material: self.material.clone(),
            description: self.description.clone(),
            bbox,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewPartRef {
    pub part: usize,
    pub bbox: Vec<GridBox>,
}

/// The asset's part list, shared by every view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalPartList {
    pub parts: Vec<GlobalPart>,
    /// Parts proposed in each view, by stem, in global index order.
    pub per_view: BTreeMap<String, Vec<ViewPartRef>>,
}

impl GlobalPartList {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.parts.iter().position(|p| p.name == name)
    }

    /// Global indices of parts not proposed in `stem` (occluded there).
    pub fn absent_in(&self, stem: &str) -> Vec<usize> {
        let present: Vec<usize> =
            self.per_view.get(stem).map(|v| v.iter().map(|r| r.part).collect()).unwrap_or_default();
        (0..self.parts.len()).filter(|i| !present.contains(i)).collect()
    }
}

/// Union of the proposed part names in first-appearance order. Material
/// classes must agree (case-insensitively) wherever a name repeats.
pub fn unify_part_list(proposals: &[ViewParts]) -> Result<GlobalPartList, SegmentError> {
    if proposals.is_empty() {
        return Err(SegmentError::EmptyProposals);
    }
    let mut parts: Vec<GlobalPart> = Vec::new();
    let mut per_view = BTreeMap::new();
    for view in proposals {
        let mut refs = Vec::new();
        for p in &view.parts {
            let idx = match parts.iter().position(|g| g.name == p.name) {
                Some(i) => {
                    if !parts[i].material.eq_ignore_ascii_case(&p.material) {
                        return Err(SegmentError::MaterialConflict(p.name.clone()));
                    }
                    i
                }
                None => {
                    parts.push(GlobalPart {
                        name: p.name.clone(),
                        material: p.material.clone(),
                        description: p.description.clone(),
                    });
                    parts.len() - 1
                }
            };
            refs.push(ViewPartRef { part: idx, bbox: p.bbox.clone() });
        }
        refs.sort_by_key(|r| r.part);
        per_view.insert(view.image_stem.clone(), refs);
    }
    Ok(GlobalPartList { parts, per_view })
}

/// A promptable segmenter: box plus positive points in, mask out.
pub trait Segmenter: Send + Sync {
    fn segment(
        &self,
        view: &ViewBundle,
        part: &PartProposal,
        rect: PixelRect,
        points: &[Pixel],
    ) -> Result<BinaryImage, SegmentError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockMode {
    /// Every pixel of the seed groups inside the box.
    Group,
    /// Only the 4-connected regions touched by seeds; without seeds, the
    /// largest region of the box-majority group.
    ConnectedRegion,
}

/// Deterministic segmenter reading the face id buffer and triangle groups.
#[derive(Debug, Clone)]
pub struct MockSegmenter {
    triangle_groups: Vec<i32>,
    mode: MockMode,
}

impl MockSegmenter {
    pub fn new(triangle_groups: Vec<i32>, mode: MockMode) -> Self {
        MockSegmenter { triangle_groups, mode }
    }

    pub fn for_mesh(mesh: &TriangleMesh, mode: MockMode) -> Self {
        Self::new((0..mesh.triangle_count()).map(|t| mesh.group_of(t)).collect(), mode)
    }

    fn group_at(&self, view: &ViewBundle, x: usize, y: usize) -> Result<Option<i32>, SegmentError> {
        let f = *view.face_id.get(x, y);
        if f < 0 {
            return Ok(None);
        }
        self.triangle_groups
            .get(f as usize)
            .copied()
            .map(Some)
            .ok_or_else(|| SegmentError::Segmenter(format!("face id {f} unknown to mock segmenter")))
    }

    fn majority_group(&self, view: &ViewBundle, rect: PixelRect) -> Result<Option<i32>, SegmentError> {
        let mut counts: BTreeMap<i32, usize> = BTreeMap::new();
        for y in rect.y0..rect.y1 {
            for x in rect.x0..rect.x1 {
                if let Some(g) = self.group_at(view, x as usize, y as usize)? {
                    *counts.entry(g).or_default() += 1;
                }
            }
        }
        // Lowest group wins ties: BTreeMap iterates ascending, max_by keeps the last max.
        Ok(counts.into_iter().rev().max_by_key(|&(_, c)| c).map(|(g, _)| g))
    }

    fn group_mask(&self, view: &ViewBundle, rect: PixelRect, groups: &[i32]) -> Result<BinaryImage, SegmentError> {
        let (w, h) = view.resolution();
        let mut m = Image::filled(w, h, false);
        for y in rect.y0..rect.y1 {
            for x in rect.x0..rect.x1 {
                if let Some(g) = self.group_at(view, x as usize, y as usize)? {
                    if groups.contains(&g) {
                        m.set(x as usize, y as usize, true);
                    }
                }
            }
        }
        Ok(m)
    }
}

impl Segmenter for MockSegmenter {
    fn segment(
        &self,
        view: &ViewBundle,
        _part: &PartProposal,
        rect: PixelRect,
        points: &[Pixel],
    ) -> Result<BinaryImage, SegmentError> {
        let (w, h) = view.resolution();
        let rect = PixelRect { x1: rect.x1.min(w as u32), y1: rect.y1.min(h as u32), ..rect };
        let mut seed_groups = Vec::new();
        for p in points {
            if let Some(g) = self.group_at(view, p.x as usize, p.y as usize)? {
                seed_groups.push(g);
            }
        }
        match self.mode {
            MockMode::Group => {
                if points.is_empty() {
                    seed_groups.extend(self.majority_group(view, rect)?);
                }
                self.group_mask(view, rect, &seed_groups)
            }
            MockMode::ConnectedRegion => {
                let mut out = Image::filled(w, h, false);
                if let Some(g) = self.majority_group(view, rect)? {
                    let comps = connected_components(&self.group_mask(view, rect, &[g])?);
                    if let Some(c) = comps.iter().fold(None::<&Vec<usize>>, |b, c| match b {
                        Some(b) if b.len() >= c.len() => Some(b),
                        _ => Some(c),
                    }) {
                        for &i in c {
                            out.data_mut()[i] = true;
                        }
                    }
                }
                for p in points {
                    let Some(g) = self.group_at(view, p.x as usize, p.y as usize)? else { continue };
                    let seed = p.y as usize * w + p.x as usize;
                    for c in connected_components(&self.group_mask(view, rect, &[g])?) {
                        if c.contains(&seed) {
                            for &i in &c {
                                out.data_mut()[i] = true;
                            }
                        }
                    }
                }
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartMask {
    pub mask: BinaryImage,
    /// The segmenter returned no pixels.
    pub empty: bool,
}

/// Segments each bbox island separately and OR-merges the results. Points
/// are routed to the islands that contain them.
pub fn segment_part(
    segmenter: &dyn Segmenter,
    view: &ViewBundle,
    part: &PartProposal,
    points: &[Pixel],
) -> Result<PartMask, SegmentError> {
    let (w, h) = view.resolution();
    if let Some(p) = points.iter().find(|p| p.x as usize >= w || p.y as usize >= h) {
        return Err(SegmentError::Precondition(format!("point ({}, {}) outside {w}x{h} frame", p.x, p.y)));
    }
    let mut mask = Image::filled(w, h, false);
    for b in &part.bbox {
        let rect = grid_to_pixels(*b, (w, h));
        let inside: Vec<Pixel> = points.iter().copied().filter(|p| rect.contains(p.x, p.y)).collect();
        let m = segmenter.segment(view, part, rect, &inside)?;
        if m.resolution() != (w, h) {
            return Err(SegmentError::Segmenter(format!(
                "mask resolution {:?} does not match view {:?}",
                m.resolution(),
                (w, h)
            )));
        }
        mask.or_assign(&m);
    }
    let empty = mask.count() == 0;
    if empty {
        log::warn!("empty mask for part '{}' in {}", part.name, view.image_stem);
    }
    Ok(PartMask { mask, empty })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrace {
    pub rounds_used: usize,
    pub converged: bool,
    /// Positive points sent to the segmenter in each round.
    pub point_prompts: Vec<Vec<Pixel>>,
}

/// Segment, inspect, and on rejection add the inspector's points and try
/// again, for at most `rounds` segmenter calls. Without approval the mask
/// with the highest reported coverage is returned (pixel count when the
/// inspector reports none; earliest round on ties).
pub fn refine_until_approved(
    segmenter: &dyn Segmenter,
    oracle: &dyn Oracle,
    view: &ViewBundle,
    part: &PartProposal,
    rounds: usize,
) -> Result<(PartMask, RefinementTrace), SegmentError> {
    if rounds == 0 {
        return Err(SegmentError::Precondition("round budget must be at least 1".into()));
    }
    let mut points: Vec<Pixel> = Vec::new();
    let mut trace = RefinementTrace { rounds_used: 0, converged: false, point_prompts: Vec::new() };
    let mut best: Option<(f64, PartMask)> = None;
    for _ in 0..rounds {
        let pm = segment_part(segmenter, view, part, &points)?;
        trace.rounds_used += 1;
        trace.point_prompts.push(points.clone());
        let verdict = oracle.inspect_mask(view, part, &pm.mask)?;
        if verdict.approved {
            trace.converged = true;
            return Ok((pm, trace));
        }
        let score = verdict.coverage.unwrap_or(pm.mask.count() as f64);
        if best.as_ref().map_or(true, |(s, _)| score > *s) {
            best = Some((score, pm));
        }
        for p in verdict.extra_positive_points {
            if !points.contains(&p) {
                points.push(p);
            }
        }
    }
    let (_, pm) = best.expect("at least one round ran");
    Ok((pm, trace))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewMask {
    pub part: usize,
    pub mask: BinaryImage,
    pub empty: bool,
    pub trace: RefinementTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub parts: GlobalPartList,
    /// Masks per view stem, in global part order.
    pub views: BTreeMap<String, Vec<ViewMask>>,
}

impl Segmentation {
    /// Parts with no pixels in any view. They still get a material and are
    /// filled in UV space.
    pub fn unmaskable(&self) -> Vec<usize> {
        (0..self.parts.parts.len())
            .filter(|&i| !self.views.values().flatten().any(|m| m.part == i && !m.empty))
            .collect()
    }

    pub fn mask(&self, stem: &str, part: usize) -> Option<&BinaryImage> {
        self.views.get(stem)?.iter().find(|m| m.part == part).map(|m| &m.mask)
    }
}

/// Asks the oracle for part proposals, freezes the global list and runs the
/// refinement loop for every proposed (view, part) pair in parallel.
pub fn segment_all(
    segmenter: &dyn Segmenter,
    oracle: &dyn Oracle,
    views: &[ViewBundle],
    rounds: usize,
) -> Result<Segmentation, SegmentError> {
    let proposals = oracle.segment_views(views)?;
    let parts = unify_part_list(&proposals)?;
    let jobs: Vec<(usize, &ViewPartRef)> = views
        .iter()
        .enumerate()
        .flat_map(|(vi, v)| parts.per_view[&v.image_stem].iter().map(move |r| (vi, r)))
        .collect();
    let results: Vec<(usize, ViewMask)> = jobs
        .par_iter()
        .map(|&(vi, r)| {
            let proposal = parts.parts[r.part].proposal(r.bbox.clone());
            let (pm, trace) = refine_until_approved(segmenter, oracle, &views[vi], &proposal, rounds)?;
            Ok((vi, ViewMask { part: r.part, mask: pm.mask, empty: pm.empty, trace }))
        })
        .collect::<Result<_, SegmentError>>()?;
    let mut out: BTreeMap<String, Vec<ViewMask>> =
        views.iter().map(|v| (v.image_stem.clone(), Vec::new())).collect();
    for (vi, m) in results {
        out.get_mut(&views[vi].image_stem).expect("stem registered").push(m);
    }
    Ok(Segmentation { parts, views: out })
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestPart {
    name: String,
    material: String,
    description: String,
    unmaskable: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestMask {
    part: usize,
    bbox: Vec<GridBox>,
    mask_path: String,
    empty: bool,
    trace: RefinementTrace,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    parts: Vec<ManifestPart>,
    views: BTreeMap<String, Vec<ManifestMask>>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SegmentError + '_ {
    move |source| SegmentError::Io { path: path.display().to_string(), source }
}

/// Writes `<stem>_p<part>.png` masks and the manifest into `dir`. Mask
/// paths in the manifest are relative to `dir`.
pub fn save_segmentation(seg: &Segmentation, dir: &Path) -> Result<PathBuf, SegmentError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let unmaskable = seg.unmaskable();
    let parts = seg
        .parts
        .parts
        .iter()
        .enumerate()
        .map(|(i, p)| ManifestPart {
            name: p.name.clone(),
            material: p.material.clone(),
            description: p.description.clone(),
            unmaskable: unmaskable.contains(&i),
        })
        .collect();
    let mut views = BTreeMap::new();
    for (stem, masks) in &seg.views {
        let mut entries = Vec::new();
        for m in masks {
            let file = format!("{stem}_p{:02}.png", m.part);
            save_mask_png(&m.mask, &dir.join(&file))?;
            let bbox = seg.parts.per_view[stem]
                .iter()
                .find(|r| r.part == m.part)
                .map(|r| r.bbox.clone())
                .unwrap_or_default();
            entries.push(ManifestMask { part: m.part, bbox, mask_path: file, empty: m.empty, trace: m.trace.clone() });
        }
        views.insert(stem.clone(), entries);
    }
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&Manifest { parts, views }).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(path)
}

pub fn load_segmentation(manifest: &Path) -> Result<Segmentation, SegmentError> {
    let text = std::fs::read_to_string(manifest).map_err(io_err(manifest))?;
    let bad = |msg: String| SegmentError::Manifest { path: manifest.display().to_string(), msg };
    let m: Manifest = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let parts: Vec<GlobalPart> = m
        .parts
        .into_iter()
        .map(|p| GlobalPart { name: p.name, material: p.material, description: p.description })
        .collect();
    let mut per_view = BTreeMap::new();
    let mut views = BTreeMap::new();
    for (stem, entries) in m.views {
        let mut refs = Vec::new();
        let mut masks = Vec::new();
        for e in entries {
            if e.part >= parts.len() {
                return Err(bad(format!("view '{stem}' references part index {}", e.part)));
            }
            refs.push(ViewPartRef { part: e.part, bbox: e.bbox });
            let mask = load_mask_png(&dir.join(&e.mask_path))?;
            masks.push(ViewMask { part: e.part, mask, empty: e.empty, trace: e.trace });
        }
        per_view.insert(stem.clone(), refs);
        views.insert(stem, masks);
    }
    Ok(Segmentation { parts: GlobalPartList { parts, per_view }, views })
}
