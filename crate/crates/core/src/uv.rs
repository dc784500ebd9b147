//! UV-space part labels: texel rasterization, multi-view mask voting,
//! nearest-label fill and material baking with seam dilation.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{raster_triangle, Vec2, Vec3};
use crate::imaging::{
    connected_components, load_u16_png, save_gray_png, save_rgb_png, save_u16_png, BinaryImage, GrayImage, Image,
    ImageError, RgbImage,
};
use crate::material::MaterialTextures;
use crate::mesh::TriangleMesh;
use crate::render::ViewBundle;

pub const DEFAULT_ATLAS_RESOLUTION: usize = 1024;
pub const DEFAULT_DILATION: usize = 4;
/// Tolerated fraction of doubly covered texels before UVs count as overlapping.
pub const OVERLAP_TOLERANCE: f64 = 1e-3;
/// Depth tolerance as a fraction of the bounding-sphere radius.
pub const DEPTH_TOLERANCE_FACTOR: f64 = 1e-3;

pub const UNLABELED: i32 = -1;
pub const OUTSIDE: i32 = -2;

#[derive(Debug, Error)]
pub enum UvError {
    #[error("mesh '{0}' has no UVs")]
    NoUvs(String),
    #[error("UV overlap: {overlapping} of {covered} texels covered more than once")]
    UvOverlap { overlapping: usize, covered: usize },
    #[error("no material assigned to part {0}")]
    MissingAssignment(usize),
    #[error("{0} island texels are still unlabeled; run fill_unlabeled first")]
    Unfilled(usize),
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
}

/// Per-texel surface point and owning triangle of a UV atlas.
#[derive(Debug, Clone, PartialEq)]
pub struct TexelMap {
    width: usize,
    height: usize,
    /// Owning triangle, `-1` outside every island.
    triangle: Vec<i32>,
    position: Vec<Vec3>,
}

impl TexelMap {
    pub fn resolution(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn triangle(&self, i: usize) -> Option<usize> {
        (self.triangle[i] >= 0).then(|| self.triangle[i] as usize)
    }

    pub fn position(&self, i: usize) -> Vec3 {
        self.position[i]
    }

    pub fn covered(&self) -> usize {
        self.triangle.iter().filter(|&&t| t >= 0).count()
    }

    pub fn coverage_mask(&self) -> BinaryImage {
        Image::from_vec(self.width, self.height, self.triangle.iter().map(|&t| t >= 0).collect())
    }
}

/// Rasterizes every triangle in texel space (`x = u·W`, `y = (1 − v)·H`)
/// and stores the barycentric surface point at each covered texel center.
pub fn texel_world_positions(mesh: &TriangleMesh, (w, h): (usize, usize)) -> Result<TexelMap, UvError> {
    let uvs = mesh.uvs().ok_or_else(|| UvError::NoUvs(mesh.name().to_string()))?;
    if w == 0 || h == 0 {
        return Err(UvError::Precondition("atlas resolution must be positive".into()));
    }
    let mut triangle = vec![-1i32; w * h];
    let mut position = vec![Vec3::ZERO; w * h];
    let mut overlapping = 0usize;
    for (t, tri_uv) in uvs.iter().enumerate() {
        let corners = mesh.corners(t);
        let pts = tri_uv.map(|uv| Vec2::new(uv.x * w as f64, (1.0 - uv.y) * h as f64));
        raster_triangle(pts, w, h, |x, y, b| {
            let i = y * w + x;
            if triangle[i] >= 0 {
                overlapping += 1;
                return;
            }
            triangle[i] = t as i32;
            position[i] = corners[0] * b[0] + corners[1] * b[1] + corners[2] * b[2];
        });
    }
    let map = TexelMap { width: w, height: h, triangle, position };
    let covered = map.covered();
    if overlapping as f64 > OVERLAP_TOLERANCE * covered as f64 {
        return Err(UvError::UvOverlap { overlapping, covered });
    }
    Ok(map)
}

/// Part label per texel with the vote counts it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct UvLabelMap {
    width: usize,
    height: usize,
    n_parts: usize,
    /// Part index, [`UNLABELED`] or [`OUTSIDE`].
    label: Vec<i32>,
    /// `n_parts` counts per texel.
    votes: Vec<u16>,
}

impl UvLabelMap {
    /// A map with no votes; `label` must hold part indices, −1 or −2.
    pub fn from_labels(width: usize, height: usize, n_parts: usize, label: Vec<i32>) -> Result<Self, UvError> {
        if label.len() != width * height {
            return Err(UvError::Precondition("label length does not match resolution".into()));
        }
        if let Some(&l) = label.iter().find(|&&l| l < OUTSIDE || l >= n_parts as i32) {
            return Err(UvError::Precondition(format!("label {l} out of range for {n_parts} parts")));
        }
        Ok(UvLabelMap { width, height, n_parts, label, votes: vec![0; width * height * n_parts] })
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn n_parts(&self) -> usize {
        self.n_parts
    }

    pub fn labels(&self) -> &[i32] {
        &self.label
    }

    pub fn label(&self, x: usize, y: usize) -> i32 {
        self.label[y * self.width + x]
    }

    pub fn votes(&self, i: usize) -> &[u16] {
        &self.votes[i * self.n_parts..(i + 1) * self.n_parts]
    }

    pub fn count(&self, label: i32) -> usize {
        self.label.iter().filter(|&&l| l == label).count()
    }

    /// Argmax consistency and empty votes outside the islands.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (i, &l) in self.label.iter().enumerate() {
            let v = self.votes(i);
            if l == OUTSIDE && v.iter().any(|&c| c > 0) {
                return Err(format!("texel {i}: votes outside the islands"));
            }
            if l >= 0 && v.iter().any(|&c| c > v[l as usize]) {
                return Err(format!("texel {i}: label {l} is not an argmax of {v:?}"));
            }
        }
        Ok(())
    }

    /// 4-connected components of the island texels, in scan order.
    pub fn islands(&self) -> Vec<Vec<usize>> {
        let inside = Image::from_vec(self.width, self.height, self.label.iter().map(|&l| l != OUTSIDE).collect());
        connected_components(&inside)
    }
}

/// Masks of one view as `(part index, mask)` pairs.
pub type ViewMaskSet<'a> = Vec<(usize, &'a BinaryImage)>;

/// Votes each covered texel into the parts whose masks contain its pixel in
/// every view where it is visible, then labels it by the argmax (lowest
/// part index on ties). A texel is visible in a view when its triangle faces
/// the camera and the triangle's plane depth at the pixel center matches the
/// depth buffer within `1e-3 ×` the bounding-sphere radius.
pub fn project_masks(
    mesh: &TriangleMesh,
    texels: &TexelMap,
    views: &[ViewBundle],
    masks: &[ViewMaskSet<'_>],
    n_parts: usize,
) -> Result<UvLabelMap, UvError> {
    if masks.len() != views.len() {
        return Err(UvError::Precondition(format!("{} mask sets for {} views", masks.len(), views.len())));
    }
    for (v, set) in views.iter().zip(masks) {
        for (part, m) in set {
            if *part >= n_parts {
                return Err(UvError::Precondition(format!("part index {part} with {n_parts} parts")));
            }
            if m.resolution() != v.resolution() {
                return Err(UvError::Precondition(format!("mask resolution differs from view {}", v.image_stem)));
            }
        }
    }
    let bbox = mesh.bounding_box().map_err(|e| UvError::Precondition(e.to_string()))?;
    let eps = DEPTH_TOLERANCE_FACTOR * bbox.bounding_sphere_radius();
    let normals: Vec<Vec3> = (0..mesh.triangle_count()).map(|t| mesh.face_normal(t)).collect();
    let frames: Vec<_> = views.iter().map(|v| v.camera.frame()).collect();

    let (w, h) = texels.resolution();
    let mut label = vec![OUTSIDE; w * h];
    let mut votes = vec![0u16; w * h * n_parts];
    label
        .par_chunks_mut(w)
        .zip(votes.par_chunks_mut(w * n_parts.max(1)))
        .enumerate()
        .for_each(|(y, (label_row, vote_row))| {
            for x in 0..w {
                let i = y * w + x;
                let Some(t) = texels.triangle(i) else { continue };
                let p = texels.position(i);
                let n = normals[t];
                let v = &mut vote_row[x * n_parts..(x + 1) * n_parts];
                for ((view, frame), set) in views.iter().zip(&frames).zip(masks) {
                    if let Some((px, py)) = visible_pixel(view, frame, p, n, eps) {
                        for (part, m) in set {
                            if *m.get(px, py) {
                                v[*part] = v[*part].saturating_add(1);
                            }
                        }
                    }
                }
                label_row[x] = argmax(v).map_or(UNLABELED, |k| k as i32);
            }
        });
    Ok(UvLabelMap { width: w, height: h, n_parts, label, votes })
}

/// Pixel at which surface point `p` (on a triangle with normal `n`) is seen
/// in `view`, if it is seen at all.
pub fn visible_pixel(
    view: &ViewBundle,
    frame: &crate::render::CameraFrame,
    p: Vec3,
    n: Vec3,
    eps: f64,
) -> Option<(usize, usize)> {
    if n.dot(p - frame.position) >= 0.0 {
        return None;
    }
    let s = frame.project(p)?;
    let (w, h) = view.resolution();
    if !(s.x >= 0.0 && s.y >= 0.0 && s.x < w as f64 && s.y < h as f64) {
        return None;
    }
    let (px, py) = (s.x as usize, s.y as usize);
    let d = *view.depth.get(px, py) as f64;
    if !d.is_finite() {
        return None;
    }
    let plane = frame.plane_depth_at_pixel(px, py, p, n)?;
    ((plane - d).abs() <= eps).then_some((px, py))
}

fn argmax(v: &[u16]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, &c) in v.iter().enumerate() {
        if c > 0 && best.map_or(true, |b| c > v[b]) {
            best = Some(k);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslandReport {
    pub texels: usize,
    pub unlabeled_before_fill: usize,
    pub unlabeled_fraction: f64,
    /// No texel of the island was labeled; it was filled with part 0.
    pub flagged: bool,
}

/// Fills unlabeled texels with the label of the nearest labeled texel of the
/// same island (4-neighbor steps). Texels reached in the same step by
/// several labels take the lowest.
pub fn fill_unlabeled(map: &UvLabelMap) -> (UvLabelMap, Vec<IslandReport>) {
    let (w, h) = map.resolution();
    let mut out = map.clone();
    let mut reports = Vec::new();
    for island in map.islands() {
        let unlabeled = island.iter().filter(|&&i| map.label[i] == UNLABELED).count();
        let flagged = unlabeled == island.len();
        if flagged {
            log::warn!("UV island of {} texels has no labels; assigning part 0", island.len());
            for &i in &island {
                out.label[i] = 0;
            }
        }
        reports.push(IslandReport {
            texels: island.len(),
            unlabeled_before_fill: unlabeled,
            unlabeled_fraction: unlabeled as f64 / island.len() as f64,
            flagged,
        });
    }

    // Level-synchronous multi-source BFS; islands cannot leak into each
    // other because OUTSIDE texels are never entered.
    let mut frontier: Vec<usize> = (0..w * h).filter(|&i| out.label[i] >= 0).collect();
    while !frontier.is_empty() {
        let mut claims: BTreeMap<usize, i32> = BTreeMap::new();
        for &i in &frontier {
            let l = out.label[i];
            for j in neighbors(i, w, h) {
                if out.label[j] == UNLABELED {
                    claims.entry(j).and_modify(|c| *c = (*c).min(l)).or_insert(l);
                }
            }
        }
        frontier = claims.keys().copied().collect();
        for (j, l) in claims {
            out.label[j] = l;
        }
    }
    (out, reports)
}

fn neighbors(i: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let (x, y) = (i % w, i / w);
    [
        (x > 0).then(|| i - 1),
        (x + 1 < w).then(|| i + 1),
        (y > 0).then(|| i - w),
        (y + 1 < h).then(|| i + w),
    ]
    .into_iter()
    .flatten()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BakedAtlas {
    pub albedo: RgbImage,
    pub roughness: GrayImage,
    pub metallic: GrayImage,
    /// Index into `material_ids`, `-1` where nothing was baked.
    pub provenance: Image<i32>,
    pub material_ids: Vec<String>,
}

impl BakedAtlas {
    pub fn provenance_id(&self, x: usize, y: usize) -> Option<&str> {
        let p = *self.provenance.get(x, y);
        (p >= 0).then(|| self.material_ids[p as usize].as_str())
    }
}

/// Samples each labeled texel's material at its texel-center UV times the
/// material's tile scale, then pushes island-edge values `dilation` texels
/// outward into the space outside the islands.
pub fn bake(
    map: &UvLabelMap,
    assignment: &BTreeMap<usize, MaterialTextures>,
    dilation: usize,
) -> Result<BakedAtlas, UvError> {
    let unfilled = map.count(UNLABELED);
    if unfilled > 0 {
        return Err(UvError::Unfilled(unfilled));
    }
    for &l in &map.label {
        if l >= 0 && !assignment.contains_key(&(l as usize)) {
            return Err(UvError::MissingAssignment(l as usize));
        }
    }
    let (w, h) = map.resolution();
    let material_ids: Vec<String> = {
        let mut ids: Vec<String> = assignment.values().map(|m| m.id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    };
    let id_index: BTreeMap<usize, i32> = assignment
        .iter()
        .map(|(&k, m)| (k, material_ids.binary_search(&m.id).expect("id registered") as i32))
        .collect();

    let mut albedo = Image::filled(w, h, [0.0f32; 3]);
    let mut roughness = Image::filled(w, h, 0.0f32);
    let mut metallic = Image::filled(w, h, 0.0f32);
    let mut provenance = Image::filled(w, h, -1i32);
    for y in 0..h {
        for x in 0..w {
            let l = map.label(x, y);
            if l < 0 {
                continue;
            }
            let m = &assignment[&(l as usize)];
            let (u, v) = crate::imaging::texel_center_uv(x, y, w, h);
            let (u, v) = (u * m.tile_scale, v * m.tile_scale);
            albedo.set(x, y, *m.albedo.sample_wrap(u, v));
            roughness.set(x, y, m.roughness.sample(u, v));
            metallic.set(x, y, m.metallic.sample(u, v));
            provenance.set(x, y, id_index[&(l as usize)]);
        }
    }

    for _ in 0..dilation {
        let prev = provenance.clone();
        let mut grew = false;
        for i in 0..w * h {
            if prev.data()[i] >= 0 || map.label[i] != OUTSIDE {
                continue;
            }
            if let Some(j) = neighbors(i, w, h).find(|&j| prev.data()[j] >= 0) {
                albedo.data_mut()[i] = albedo.data()[j];
                roughness.data_mut()[i] = roughness.data()[j];
                metallic.data_mut()[i] = metallic.data()[j];
                provenance.data_mut()[i] = prev.data()[j];
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    Ok(BakedAtlas { albedo, roughness, metallic, provenance, material_ids })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BakeReport {
    pub resolution: [usize; 2],
    pub dilation: usize,
    pub islands: Vec<IslandReport>,
    /// Labeled texel count per part after fill.
    pub part_texels: BTreeMap<usize, usize>,
    pub materials: BTreeMap<usize, String>,
}

impl BakeReport {
    pub fn new(
        filled: &UvLabelMap,
        islands: Vec<IslandReport>,
        assignment: &BTreeMap<usize, MaterialTextures>,
        dilation: usize,
    ) -> Self {
        let mut part_texels = BTreeMap::new();
        for &l in filled.labels() {
            if l >= 0 {
                *part_texels.entry(l as usize).or_insert(0) += 1;
            }
        }
        let (w, h) = filled.resolution();
        BakeReport {
            resolution: [w, h],
            dilation,
            islands,
            part_texels,
            materials: assignment.iter().map(|(&k, m)| (k, m.id.clone())).collect(),
        }
    }
}

/// Labels as a 16-bit PNG holding `label + 2`.
pub fn save_label_png(map: &UvLabelMap, path: &Path) -> Result<(), UvError> {
    let (w, h) = map.resolution();
    let img = Image::from_vec(w, h, map.labels().iter().map(|&l| (l + 2) as u16).collect());
    Ok(save_u16_png(&img, path)?)
}

pub fn load_label_png(path: &Path, n_parts: usize) -> Result<UvLabelMap, UvError> {
    let img = load_u16_png(path)?;
    let (w, h) = img.resolution();
    UvLabelMap::from_labels(w, h, n_parts, img.data().iter().map(|&v| v as i32 - 2).collect())
}

/// Writes `albedo.png`, `roughness.png`, `metallic.png` and
/// `provenance.json` into `dir`.
pub fn save_atlas(atlas: &BakedAtlas, dir: &Path) -> Result<(), UvError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| UvError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    save_rgb_png(&atlas.albedo, &dir.join("albedo.png"))?;
    save_gray_png(&atlas.roughness, &dir.join("roughness.png"))?;
    save_gray_png(&atlas.metallic, &dir.join("metallic.png"))?;
    let (w, h) = atlas.provenance.resolution();
    let doc = serde_json::json!({
        "resolution": [w, h],
        "material_ids": atlas.material_ids,
        "texels": atlas.provenance.data(),
    });
    let path = dir.join("provenance.json");
    std::fs::write(&path, serde_json::to_string(&doc).expect("provenance serializes")).map_err(io(&path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::{quad, unit_cube};

    #[test]
    fn identity_quad_covers_every_texel() {
        let q = quad(0.0, 0.5, 0);
        let t = texel_world_positions(&q, (64, 64)).unwrap();
        assert_eq!(t.covered(), 64 * 64);
        let p = t.position(32 * 64 + 32);
        let half_texel = 1.0 / 64.0;
        assert!(p.x.abs() <= half_texel + 1e-12 && p.y.abs() <= half_texel + 1e-12, "{p:?}");
    }

    #[test]
    fn duplicated_uv_region_is_an_overlap() {
        let q = quad(0.0, 0.5, 0);
        let dup = TriangleMesh::new(
            "dup",
            q.vertices().to_vec(),
            [q.triangles(), q.triangles()].concat(),
            Some([q.uvs().unwrap(), q.uvs().unwrap()].concat()),
            None,
        )
        .unwrap();
        let err = texel_world_positions(&dup, (32, 32)).unwrap_err();
        assert!(err.to_string().starts_with("UV overlap"), "{err}");
    }

    #[test]
    fn cube_atlas_has_six_islands() {
        let t = texel_world_positions(&unit_cube(), (128, 128)).unwrap();
        let labels = t.coverage_mask().data().iter().map(|&c| if c { UNLABELED } else { OUTSIDE }).collect();
        let m = UvLabelMap::from_labels(128, 128, 1, labels).unwrap();
        assert_eq!(m.islands().len(), 6);
    }

    #[test]
    fn fill_uses_unanimous_neighbourhood() {
        let mut labels = vec![2; 9];
        labels[4] = UNLABELED;
        let m = UvLabelMap::from_labels(3, 3, 3, labels).unwrap();
        let (f, rep) = fill_unlabeled(&m);
        assert_eq!(f.label(1, 1), 2);
        assert_eq!(rep.len(), 1);
        assert!(!rep[0].flagged);
    }

    #[test]
    fn fully_unlabeled_island_is_flagged() {
        let labels = vec![OUTSIDE, UNLABELED, UNLABELED, OUTSIDE, 1, OUTSIDE];
        let m = UvLabelMap::from_labels(6, 1, 2, labels).unwrap();
        let (f, rep) = fill_unlabeled(&m);
        assert_eq!(f.labels(), &[OUTSIDE, 0, 0, OUTSIDE, 1, OUTSIDE]);
        assert!(rep[0].flagged && !rep[1].flagged);
    }

    #[test]
    fn bake_rejects_missing_assignment_and_unfilled() {
        let m = UvLabelMap::from_labels(2, 1, 2, vec![0, 1]).unwrap();
        let mut a = BTreeMap::new();
        a.insert(0, MaterialTextures::constant("a", [1.0; 3], 0.2, 0.0));
        assert!(matches!(bake(&m, &a, 4), Err(UvError::MissingAssignment(1))));
        let m = UvLabelMap::from_labels(2, 1, 2, vec![0, UNLABELED]).unwrap();
        assert!(matches!(bake(&m, &a, 4), Err(UvError::Unfilled(1))));
    }

    #[test]
    fn dilation_stops_after_d_texels() {
        let mut labels = vec![OUTSIDE; 10];
        labels[0] = 0;
        let m = UvLabelMap::from_labels(10, 1, 1, labels).unwrap();
        let mut a = BTreeMap::new();
        a.insert(0, MaterialTextures::constant("a", [1.0, 0.0, 0.0], 0.3, 0.0));
        let atlas = bake(&m, &a, 4).unwrap();
        let baked: Vec<bool> = (0..10).map(|x| atlas.provenance_id(x, 0).is_some()).collect();
        assert_eq!(baked, [true, true, true, true, true, false, false, false, false, false]);
        assert_eq!(*atlas.roughness.get(4, 0), 0.3);
    }
}
