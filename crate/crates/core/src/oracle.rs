//! Boundary to the external models: part segmenter, material chooser,
//! density estimator, mask inspector and video judge.
//!
//! Every remote response is validated against its JSON schema before any
//! typed value is produced. [`MockOracle`] answers the same calls
//! deterministically from mesh group labels and fixtures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{BinaryImage, RgbImage};
use crate::render::ViewBundle;

pub mod mock;
pub mod prompts;
pub mod remote;
pub mod schema;

pub use mock::MockOracle;
pub use remote::{HttpTransport, OracleRequest, RemoteOracle, Transport};

/// Grid-space edge of the normalized image frame.
pub const GRID_SIZE: u32 = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("malformed JSON from oracle: {0}")]
    MalformedJson(String),
    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("oracle transport failure: {0}")]
    Transport(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("no fixture for {0:?}")]
    NoFixture(String),
}

impl OracleError {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        OracleError::Schema { path: path.into(), message: message.into() }
    }

    pub fn is_transport(&self) -> bool {
        matches!(self, OracleError::Transport(_))
    }
}

/// `[ymin, xmin, ymax, xmax]` on the 1000×1000 grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u32; 4]", into = "[u32; 4]")]
pub struct GridBox {
    pub ymin: u32,
    pub xmin: u32,
    pub ymax: u32,
    pub xmax: u32,
}

impl GridBox {
    pub fn new(ymin: u32, xmin: u32, ymax: u32, xmax: u32) -> Result<Self, String> {
        if [ymin, xmin, ymax, xmax].iter().any(|&c| c > GRID_SIZE) {
            return Err("coordinate out of 0..1000".into());
        }
        if ymin > ymax || xmin > xmax {
            return Err("expected ymin <= ymax and xmin <= xmax".into());
        }
        Ok(GridBox { ymin, xmin, ymax, xmax })
    }
}

impl TryFrom<[u32; 4]> for GridBox {
    type Error = String;
    fn try_from(a: [u32; 4]) -> Result<Self, String> {
        GridBox::new(a[0], a[1], a[2], a[3])
    }
}

impl From<GridBox> for [u32; 4] {
    fn from(b: GridBox) -> Self {
        [b.ymin, b.xmin, b.ymax, b.xmax]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartProposal {
    pub name: String,
    pub material: String,
    pub description: String,
    pub bbox: Vec<GridBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewParts {
    pub image_stem: String,
    pub parts: Vec<PartProposal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialChoice {
    pub chosen_material_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub density: f64,
    pub notes: String,
}

/// Pixel coordinate `(x, y)`, origin at the top-left pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct Pixel {
    pub x: u32,
    pub y: u32,
}

impl From<[u32; 2]> for Pixel {
    fn from(a: [u32; 2]) -> Self {
        Pixel { x: a[0], y: a[1] }
    }
}

impl From<Pixel> for [u32; 2] {
    fn from(p: Pixel) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskVerdict {
    pub approved: bool,
    pub extra_positive_points: Vec<Pixel>,
    /// Estimated fraction of the part covered by the mask, when the
    /// inspector reports one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeScore {
    pub score: f64,
    pub rationale: String,
}

/// One `(id, description)` line of a material catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub id: String,
    pub description: String,
}

pub trait Oracle: Send + Sync {
    /// One [`ViewParts`] per input view, in input order.
    fn segment_views(&self, views: &[ViewBundle]) -> Result<Vec<ViewParts>, OracleError>;

    fn choose_material(
        &self,
        part: &PartProposal,
        catalog: &[CatalogEntry],
        context: &str,
    ) -> Result<MaterialChoice, OracleError>;

    fn estimate_density(&self, render: &RgbImage) -> Result<DensityEstimate, OracleError>;

    fn inspect_mask(
        &self,
        view: &ViewBundle,
        part: &PartProposal,
        mask: &BinaryImage,
    ) -> Result<MaskVerdict, OracleError>;

    fn judge_video(&self, frames: &[RgbImage], instruction: &str) -> Result<JudgeScore, OracleError>;
}

pub(crate) fn check_catalog(catalog: &[CatalogEntry]) -> Result<(), OracleError> {
    if catalog.is_empty() {
        return Err(OracleError::Precondition("empty material catalog".into()));
    }
    Ok(())
}

pub(crate) fn check_mask_resolution(view: &ViewBundle, mask: &BinaryImage) -> Result<(), OracleError> {
    if mask.resolution() != view.resolution() {
        return Err(OracleError::Precondition(format!(
            "mask resolution {:?} does not match view resolution {:?}",
            mask.resolution(),
            view.resolution()
        )));
    }
    Ok(())
}
