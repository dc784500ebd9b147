//! Deterministic offline oracle backed by mesh group labels and fixtures.
//!
//! Each triangle group becomes one part named `part_<group>`. Part material
//! classes default to a fixed rotation and can be overridden per group.

use std::collections::BTreeMap;

use super::{
    check_catalog, check_mask_resolution, CatalogEntry, DensityEstimate, JudgeScore, MaskVerdict,
    MaterialChoice, Oracle, OracleError, PartProposal, Pixel, ViewParts,
};
use crate::imaging::{connected_components, BinaryImage, Image, RgbImage};
use crate::mesh::TriangleMesh;
use crate::render::ViewBundle;
use crate::segment::{pixels_to_grid_covering, PixelRect};

/// Coverage of the ground-truth pixels required for approval.
pub const DEFAULT_COVERAGE_THRESHOLD: f64 = 0.95;
pub const MOCK_DENSITY: f64 = 1000.0;

const DEFAULT_MATERIALS: [&str; 6] = ["Metal", "Plastic", "Ceramic", "Wood", "Fabric", "Rubber"];

#[derive(Debug, Clone, PartialEq)]
struct MockPart {
    name: String,
    material: String,
    description: String,
}

#[derive(Debug, Clone)]
pub struct MockOracle {
    triangle_groups: Vec<i32>,
    parts: BTreeMap<i32, MockPart>,
    coverage_threshold: f64,
    judge_fixtures: BTreeMap<String, f64>,
}

impl MockOracle {
    pub fn new(triangle_groups: Vec<i32>) -> Self {
        let mut distinct = triangle_groups.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let parts = distinct
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                let material = DEFAULT_MATERIALS[i % DEFAULT_MATERIALS.len()].to_string();
                let description = format!("{} surface", material.to_lowercase());
                (g, MockPart { name: Self::part_name(g), material, description })
            })
            .collect();
        MockOracle {
            triangle_groups,
            parts,
            coverage_threshold: DEFAULT_COVERAGE_THRESHOLD,
            judge_fixtures: BTreeMap::new(),
        }
    }

    pub fn for_mesh(mesh: &TriangleMesh) -> Self {
        Self::new((0..mesh.triangle_count()).map(|t| mesh.group_of(t)).collect())
    }

    /// A mock with no geometry, for judge-only use.
    pub fn judge_only(fixtures: impl IntoIterator<Item = (String, f64)>) -> Self {
        let mut m = Self::new(Vec::new());
        m.judge_fixtures.extend(fixtures);
        m
    }

    pub fn part_name(group: i32) -> String {
        format!("part_{group}")
    }

    pub fn with_part_material(mut self, group: i32, material: &str, description: &str) -> Self {
        if let Some(p) = self.parts.get_mut(&group) {
            p.material = material.to_string();
            p.description = description.to_string();
        }
        self
    }

    pub fn with_judge_fixture(mut self, instruction: &str, score: f64) -> Self {
        self.judge_fixtures.insert(instruction.to_string(), score);
        self
    }

    pub fn with_coverage_threshold(mut self, tau: f64) -> Self {
        self.coverage_threshold = tau;
        self
    }

    pub fn group_of_part(&self, name: &str) -> Option<i32> {
        self.parts.iter().find(|(_, p)| p.name == name).map(|(&g, _)| g)
    }

    fn pixel_group(&self, face: i32) -> Result<Option<i32>, OracleError> {
        if face < 0 {
            return Ok(None);
        }
        self.triangle_groups
            .get(face as usize)
            .copied()
            .map(Some)
            .ok_or_else(|| OracleError::Precondition(format!("face id {face} unknown to mock oracle")))
    }

    /// Pixels of `view` whose triangle belongs to the part's group.
    pub fn ground_truth(&self, view: &ViewBundle, part_name: &str) -> Result<BinaryImage, OracleError> {
        let group = self
            .group_of_part(part_name)
            .ok_or_else(|| OracleError::Precondition(format!("part {part_name:?} unknown to mock oracle")))?;
        let (w, h) = view.resolution();
        let mut out = Image::filled(w, h, false);
        for (i, &f) in view.face_id.data().iter().enumerate() {
            if self.pixel_group(f)? == Some(group) {
                out.data_mut()[i] = true;
            }
        }
        Ok(out)
    }

    fn view_parts(&self, view: &ViewBundle) -> Result<ViewParts, OracleError> {
        let (w, h) = view.resolution();
        let mut rects: BTreeMap<i32, PixelRect> = BTreeMap::new();
        for y in 0..h {
            for x in 0..w {
                if let Some(g) = self.pixel_group(*view.face_id.get(x, y))? {
                    let (x, y) = (x as u32, y as u32);
                    rects
                        .entry(g)
                        .and_modify(|r| {
                            r.y0 = r.y0.min(y);
                            r.x0 = r.x0.min(x);
                            r.y1 = r.y1.max(y + 1);
                            r.x1 = r.x1.max(x + 1);
                        })
                        .or_insert(PixelRect { y0: y, x0: x, y1: y + 1, x1: x + 1 });
                }
            }
        }
        let parts = rects
            .into_iter()
            .map(|(g, rect)| {
                let p = &self.parts[&g];
                PartProposal {
                    name: p.name.clone(),
                    material: p.material.clone(),
                    description: p.description.clone(),
                    bbox: vec![pixels_to_grid_covering(rect, (w, h))],
                }
            })
            .collect();
        Ok(ViewParts { image_stem: view.image_stem.clone(), parts })
    }
}

/// Centroid of the largest 4-connected region of `region`, snapped to the
/// nearest region pixel when the rounded centroid falls outside it.
pub fn largest_region_centroid(region: &BinaryImage) -> Option<Pixel> {
    let w = region.width();
    let comps = connected_components(region);
    // First component wins ties (scan order).
    let comp = comps.iter().fold(None::<&Vec<usize>>, |best, c| match best {
        Some(b) if b.len() >= c.len() => Some(b),
        _ => Some(c),
    })?;
    let n = comp.len() as f64;
    let mx = comp.iter().map(|&i| (i % w) as f64).sum::<f64>() / n;
    let my = comp.iter().map(|&i| (i / w) as f64).sum::<f64>() / n;
    let (cx, cy) = (mx.round() as usize, my.round() as usize);
    if *region.get(cx, cy) && comp.contains(&(cy * w + cx)) {
        return Some(Pixel { x: cx as u32, y: cy as u32 });
    }
    let nearest = comp
        .iter()
        .min_by(|&&a, &&b| {
            let da = ((a % w) as f64 - mx).powi(2) + ((a / w) as f64 - my).powi(2);
            let db = ((b % w) as f64 - mx).powi(2) + ((b / w) as f64 - my).powi(2);
            da.total_cmp(&db).then(a.cmp(&b))
        })
        .copied()?;
    Some(Pixel { x: (nearest % w) as u32, y: (nearest / w) as u32 })
}

impl Oracle for MockOracle {
    fn segment_views(&self, views: &[ViewBundle]) -> Result<Vec<ViewParts>, OracleError> {
        if views.is_empty() {
            return Err(OracleError::Precondition("segment_views needs at least one view".into()));
        }
        views.iter().map(|v| self.view_parts(v)).collect()
    }

    fn choose_material(
        &self,
        part: &PartProposal,
        catalog: &[CatalogEntry],
        _context: &str,
    ) -> Result<MaterialChoice, OracleError> {
        check_catalog(catalog)?;
        let query = format!("{} {} {}", part.name, part.material, part.description);
        let ranked = crate::material::rank_catalog(&query, catalog);
        Ok(MaterialChoice { chosen_material_id: ranked[0].0.clone() })
    }

    fn estimate_density(&self, render: &RgbImage) -> Result<DensityEstimate, OracleError> {
        if render.data().is_empty() {
            return Err(OracleError::Precondition("empty render".into()));
        }
        Ok(DensityEstimate { density: MOCK_DENSITY, notes: "mock".into() })
    }

    fn inspect_mask(
        &self,
        view: &ViewBundle,
        part: &PartProposal,
        mask: &BinaryImage,
    ) -> Result<MaskVerdict, OracleError> {
        check_mask_resolution(view, mask)?;
        let truth = self.ground_truth(view, &part.name)?;
        let total = truth.count();
        if total == 0 {
            return Ok(MaskVerdict { approved: true, extra_positive_points: vec![], coverage: Some(1.0) });
        }
        let missing = Image::from_vec(
            truth.width(),
            truth.height(),
            truth.data().iter().zip(mask.data()).map(|(&t, &m)| t && !m).collect(),
        );
        let coverage = (total - missing.count()) as f64 / total as f64;
        if coverage >= self.coverage_threshold {
            return Ok(MaskVerdict { approved: true, extra_positive_points: vec![], coverage: Some(coverage) });
        }
        let point = largest_region_centroid(&missing).expect("coverage < 1 implies missing pixels");
        Ok(MaskVerdict { approved: false, extra_positive_points: vec![point], coverage: Some(coverage) })
    }

    fn judge_video(&self, frames: &[RgbImage], instruction: &str) -> Result<JudgeScore, OracleError> {
        if frames.is_empty() {
            return Err(OracleError::Precondition("judge_video needs at least one frame".into()));
        }
        let score = *self
            .judge_fixtures
            .get(instruction)
            .ok_or_else(|| OracleError::NoFixture(instruction.to_string()))?;
        Ok(JudgeScore { score, rationale: "mock".into() })
    }
}
