//! Asset hygiene: real-world scale, density and a light-bake check on the
//! albedo atlas.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{connected_components, value_saturation, BinaryImage, Image, RgbImage};
use crate::mesh::{AssetMeta, MeshError, TriangleMesh};
use crate::oracle::{Oracle, OracleError};
use crate::render::{camera_ring, rasterize_with, RenderError, Shading, ShadingOverride};
use crate::render::{DEFAULT_DISTANCE_FACTOR, DEFAULT_RESOLUTION, DEFAULT_VERTICAL_FOV_DEG};
use crate::uv::{texel_world_positions, UvError};

pub const FIXED_DENSITY: f64 = 1000.0;
pub const LIGHT_BAKE_THRESHOLD: f64 = 0.01;
/// Luminance above the island median that counts as a highlight.
pub const HIGHLIGHT_DELTA: f32 = 0.4;
pub const HIGHLIGHT_MAX_SATURATION: f32 = 0.15;
pub const MIN_BLOB_TEXELS: usize = 16;
pub const MIN_ISLAND_TEXELS: usize = 64;

#[derive(Debug, Error)]
pub enum QcError {
    #[error("degenerate bounding box (zero extent)")]
    DegenerateBbox,
    #[error("target extent must be positive, got {0}")]
    BadTarget(f64),
    #[error("albedo {albedo:?} and island mask {mask:?} differ in resolution")]
    ResolutionMismatch { albedo: (usize, usize), mask: (usize, usize) },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Uv(#[from] UvError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Scales `mesh` uniformly about its box center so that its largest box
/// side becomes `target_extent_m`.
pub fn apply_scale(mesh: &TriangleMesh, target_extent_m: f64) -> Result<(TriangleMesh, f64), QcError> {
    if !(target_extent_m > 0.0 && target_extent_m.is_finite()) {
        return Err(QcError::BadTarget(target_extent_m));
    }
    let bbox = mesh.bounding_box()?;
    let extent = bbox.max_extent();
    if extent <= 0.0 {
        return Err(QcError::DegenerateBbox);
    }
    let s = target_extent_m / extent;
    let c = bbox.center();
    Ok((mesh.map_vertices(|v| c + (v - c) * s), s))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightBake {
    pub score: f64,
    /// Fewer than [`MIN_ISLAND_TEXELS`] island texels; the score is 0.
    pub insufficient: bool,
}

/// Fraction of island texels in near-white highlight blobs: texels whose
/// HSV value exceeds the island median by at least 0.4 with saturation
/// below 0.15, counted only in 4-connected blobs of at least 16 texels.
pub fn light_bake_score(albedo: &RgbImage, island: &BinaryImage) -> Result<LightBake, QcError> {
    if albedo.resolution() != island.resolution() {
        return Err(QcError::ResolutionMismatch { albedo: albedo.resolution(), mask: island.resolution() });
    }
    let n = island.count();
    if n < MIN_ISLAND_TEXELS {
        return Ok(LightBake { score: 0.0, insufficient: true });
    }
    let vs: Vec<(f32, f32)> = albedo.data().iter().map(|&c| value_saturation(c)).collect();
    let mut values: Vec<f32> = vs.iter().zip(island.data()).filter(|(_, &m)| m).map(|(v, _)| v.0).collect();
    values.sort_by(f32::total_cmp);
    let median = values[(values.len() - 1) / 2];
    let (w, h) = albedo.resolution();
    let highlight = Image::from_vec(
        w,
        h,
        vs.iter()
            .zip(island.data())
            .map(|(&(v, s), &m)| m && v - median >= HIGHLIGHT_DELTA && s < HIGHLIGHT_MAX_SATURATION)
            .collect(),
    );
    let hits: usize =
        connected_components(&highlight).iter().map(Vec::len).filter(|&len| len >= MIN_BLOB_TEXELS).sum();
    Ok(LightBake { score: hits as f64 / n as f64, insufficient: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensitySource {
    Fixed,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcReport {
    pub asset: String,
    pub scale_factor: f64,
    pub density: f64,
    pub light_bake_flag: bool,
    pub light_bake_score: f64,
    pub notes: String,
}

impl QcReport {
    pub fn meta(&self) -> AssetMeta {
        AssetMeta::new(self.scale_factor, Some(self.density)).expect("report values are validated")
    }

    pub fn is_consistent(&self) -> bool {
        self.light_bake_flag == (self.light_bake_score > LIGHT_BAKE_THRESHOLD)
    }
}

/// Scales the mesh, attaches a density and checks the albedo for baked
/// lighting. The island mask is the mesh's UV coverage at the albedo
/// resolution, or the whole image when the mesh has no UVs.
pub fn qc_asset(
    mesh: &TriangleMesh,
    albedo: &RgbImage,
    target_extent_m: f64,
    density_source: DensitySource,
    oracle: Option<&dyn Oracle>,
) -> Result<(TriangleMesh, QcReport), QcError> {
    let (scaled, scale_factor) = apply_scale(mesh, target_extent_m)?;
    let mut notes = Vec::new();

    let density = match (density_source, oracle) {
        (DensitySource::Fixed, _) => FIXED_DENSITY,
        (DensitySource::Oracle, None) => {
            return Err(OracleError::Precondition("oracle density without an oracle".into()).into())
        }
        (DensitySource::Oracle, Some(o)) => {
            let bbox = scaled.bounding_box()?;
            let res = (DEFAULT_RESOLUTION, DEFAULT_RESOLUTION);
            let cam = camera_ring(&bbox, 1, DEFAULT_DISTANCE_FACTOR, DEFAULT_VERTICAL_FOV_DEG.to_radians(), res)?
                .remove(0);
            let shading = Shading { albedo: Some(albedo), ..Shading::default() };
            let view = rasterize_with(&scaled, &cam, &ShadingOverride::none(), &shading, scaled.name())?;
            let est = o.estimate_density(&view.color)?;
            if !est.notes.is_empty() {
                notes.push(format!("density: {}", est.notes));
            }
            est.density
        }
    };

    let island = if scaled.uvs().is_some() {
        texel_world_positions(&scaled, albedo.resolution())?.coverage_mask()
    } else {
        notes.push("mesh has no UVs; whole albedo used as island".into());
        BinaryImage::filled(albedo.width(), albedo.height(), true)
    };
    let lb = light_bake_score(albedo, &island)?;
    if lb.insufficient {
        notes.push("insufficient evidence for light-bake check".into());
    }
    let report = QcReport {
        asset: mesh.name().to_string(),
        scale_factor,
        density,
        light_bake_flag: lb.score > LIGHT_BAKE_THRESHOLD,
        light_bake_score: lb.score,
        notes: notes.join("; "),
    };
    Ok((scaled, report))
}
