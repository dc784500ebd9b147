//! Config-driven orchestration of all stages with a content-hashed artifact
//! manifest.
//!
//! Stages exchange data only through the output directory, one subfolder
//! per stage, so any stage can be rerun on its own. A stage is skipped when
//! its input hash matches the previous manifest and its recorded artifacts
//! are still on disk with the same hashes.

pub mod demo;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::eval::{self, Category, EvalError, Status, TaskSpec, TrajectoryLog};
use crate::imaging::{load_rgb_png, ImageError, RgbImage};
use crate::layout::{self, Level, LayoutError, ObjectDecl, Relation};
use crate::material::{self, build_index, CategoryMap, LibraryIndex, MaterialError, MaterialTextures, RetrievalMode};
use crate::mesh::{load_mesh, save_mesh_json, MeshError, TriangleMesh};
use crate::oracle::remote::{DEFAULT_MAX_IN_FLIGHT, ENV_TOKEN, ENV_URL};
use crate::oracle::{HttpTransport, MockOracle, Oracle, OracleError, RemoteOracle};
use crate::qc::{qc_asset, DensitySource, QcError};
use crate::render::{self, camera_ring, render_views, RenderError, Shading, ShadingOverride, ViewBundle};
use crate::segment::{self, MockMode, MockSegmenter, SegmentError, Segmentation};
use crate::uv::{self, UvError, UvLabelMap, ViewMaskSet};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;
pub const ASSIGNMENTS_FILE: &str = "assignments.json";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_STAGE: i32 = 3;
pub const EXIT_TRANSPORT: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Render,
    Segment,
    Retrieve,
    Bake,
    Qc,
    Layout,
    Eval,
    Correlate,
}

impl Stage {
    /// Dependency order.
    pub const ALL: [Stage; 8] = [
        Stage::Render,
        Stage::Segment,
        Stage::Retrieve,
        Stage::Bake,
        Stage::Qc,
        Stage::Layout,
        Stage::Eval,
        Stage::Correlate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Render => "render",
            Stage::Segment => "segment",
            Stage::Retrieve => "retrieve",
            Stage::Bake => "bake",
            Stage::Qc => "qc",
            Stage::Layout => "layout",
            Stage::Eval => "eval",
            Stage::Correlate => "correlate",
        }
    }

    /// Stages whose output this stage reads.
    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Segment => &[Stage::Render],
            Stage::Retrieve => &[Stage::Segment],
            Stage::Bake => &[Stage::Render, Stage::Segment, Stage::Retrieve],
            Stage::Qc => &[Stage::Bake],
            _ => &[],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL.into_iter().find(|st| st.as_str() == s).ok_or_else(|| format!("unknown stage '{s}'"))
    }
}

/// Parses a comma-separated stage list such as `layout,eval`.
pub fn parse_stage_list(s: &str) -> Result<Vec<Stage>, String> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(Stage::from_str).collect()
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: Stage, message: String, transport: bool },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => EXIT_CONFIG,
            PipelineError::Stage { transport: true, .. } => EXIT_TRANSPORT,
            PipelineError::Stage { .. } | PipelineError::Io { .. } => EXIT_STAGE,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.display().to_string(), source }
}

/// Error raised inside a stage body, before the stage name is attached.
#[derive(Debug)]
pub struct StageFailure {
    pub message: String,
    pub transport: bool,
}

impl StageFailure {
    pub fn msg(message: impl Into<String>) -> Self {
        StageFailure { message: message.into(), transport: false }
    }

    fn at(self, stage: Stage) -> PipelineError {
        PipelineError::Stage { stage, message: self.message, transport: self.transport }
    }

    pub fn exit_code(&self) -> i32 {
        if self.transport {
            EXIT_TRANSPORT
        } else {
            EXIT_STAGE
        }
    }
}

impl fmt::Display for StageFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

macro_rules! stage_failure_from {
    ($($t:ty => $transport:expr),* $(,)?) => {$(
        impl From<$t> for StageFailure {
            fn from(e: $t) -> Self {
                let transport: fn(&$t) -> bool = $transport;
                StageFailure { transport: transport(&e), message: e.to_string() }
            }
        }
    )*};
}

stage_failure_from! {
    OracleError => |e| e.is_transport(),
    SegmentError => |e| matches!(e, SegmentError::Oracle(o) if o.is_transport()),
    MaterialError => |e| matches!(e, MaterialError::Oracle(o) if o.is_transport()),
    QcError => |e| matches!(e, QcError::Oracle(o) if o.is_transport()),
    EvalError => |e| matches!(e, EvalError::Oracle(o) if o.is_transport()),
    MeshError => |_| false,
    RenderError => |_| false,
    UvError => |_| false,
    LayoutError => |_| false,
    ImageError => |_| false,
    PipelineError => |e| matches!(e, PipelineError::Stage { transport: true, .. }),
}

// ---------------------------------------------------------------------------
// Config

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMode {
    #[default]
    Mock,
    Remote,
}

impl FromStr for OracleMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mock" => Ok(OracleMode::Mock),
            "remote" => Ok(OracleMode::Remote),
            other => Err(format!("unknown oracle mode '{other}' (expected mock or remote)")),
        }
    }
}

fn default_max_in_flight() -> usize {
    DEFAULT_MAX_IN_FLIGHT
}
fn default_timeout_s() -> u64 {
    300
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default)]
    pub mode: OracleMode,
    /// Falls back to `FORGE_ORACLE_URL`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
    /// Instruction → score table for the mock video judge.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub judge_fixtures: BTreeMap<String, f64>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            mode: OracleMode::Mock,
            endpoint: None,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            timeout_s: default_timeout_s(),
            judge_fixtures: BTreeMap::new(),
        }
    }
}

impl OracleConfig {
    /// Builds the configured oracle. The mock derives its parts from `mesh`.
    pub fn build(&self, mesh: Option<&TriangleMesh>) -> Result<Box<dyn Oracle>, StageFailure> {
        match self.mode {
            OracleMode::Mock => {
                let mut m = mesh.map(MockOracle::for_mesh).unwrap_or_else(|| MockOracle::new(Vec::new()));
                for (instr, score) in &self.judge_fixtures {
                    m = m.with_judge_fixture(instr, *score);
                }
                Ok(Box::new(m))
            }
            OracleMode::Remote => {
                let endpoint = match &self.endpoint {
                    Some(e) => e.clone(),
                    None => std::env::var(ENV_URL).map_err(|_| StageFailure::msg(format!("{ENV_URL} is not set")))?,
                };
                let token = std::env::var(ENV_TOKEN).ok();
                let transport = HttpTransport::new(endpoint, token, Duration::from_secs(self.timeout_s));
                Ok(Box::new(RemoteOracle::new(transport, self.max_in_flight)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetConfig {
    pub mesh: PathBuf,
    /// Real-world size of the largest box side in meters; required by qc.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_extent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    pub views: usize,
    pub resolution: usize,
    pub distance_factor: f64,
    pub fov_deg: f64,
    pub no_specular: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            views: render::DEFAULT_VIEWS,
            resolution: render::DEFAULT_RESOLUTION,
            distance_factor: render::DEFAULT_DISTANCE_FACTOR,
            fov_deg: render::DEFAULT_VERTICAL_FOV_DEG,
            no_specular: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentConfig {
    pub rounds: usize,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig { rounds: segment::DEFAULT_ROUNDS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrieveConfig {
    pub mode: RetrievalMode,
    /// Free-text scene context passed to the material chooser.
    pub context: String,
}

impl Default for RetrieveConfig {
    fn default() -> Self {
        RetrieveConfig { mode: RetrievalMode::Offline, context: String::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BakeConfig {
    pub resolution: usize,
    pub dilation: usize,
}

impl Default for BakeConfig {
    fn default() -> Self {
        BakeConfig { resolution: uv::DEFAULT_ATLAS_RESOLUTION, dilation: uv::DEFAULT_DILATION }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QcConfig {
    pub density_source: DensitySource,
}

impl Default for QcConfig {
    fn default() -> Self {
        QcConfig { density_source: DensitySource::Fixed }
    }
}

fn default_level() -> u8 {
    1
}
fn default_max_attempts() -> usize {
    layout::DEFAULT_MAX_ATTEMPTS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutConfig {
    pub graph: PathBuf,
    /// Required; there is no clock-derived default.
    pub seed: u64,
    #[serde(default = "default_level")]
    pub level: u8,
    /// JSON array of object declarations used by levels 2 and 3.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<PathBuf>,
    /// The added relation for level 3.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<Relation>,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub task: PathBuf,
    /// Folder of `*.jsonl` trajectory logs, one per trial.
    pub logs: PathBuf,
    #[serde(default)]
    pub half_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelateConfig {
    pub sim: PathBuf,
    pub real: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub output: PathBuf,
    /// Enabled stages; when absent, every stage whose section is present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stages: Option<Vec<Stage>>,
    /// Worker threads for intra-stage parallelism; rayon's default if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset: Option<AssetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub library: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_map: Option<PathBuf>,
    #[serde(default)]
    pub render: RenderConfig,
    #[serde(default)]
    pub segment: SegmentConfig,
    #[serde(default)]
    pub retrieve: RetrieveConfig,
    #[serde(default)]
    pub bake: BakeConfig,
    #[serde(default)]
    pub qc: QcConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<LayoutConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlate: Option<CorrelateConfig>,
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// Parses a config file; relative paths resolve against its folder.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        cfg.rebase(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        rebase(base, &mut self.output);
        if let Some(a) = &mut self.asset {
            rebase(base, &mut a.mesh);
        }
        for p in [&mut self.library, &mut self.category_map].into_iter().flatten() {
            rebase(base, p);
        }
        if let Some(l) = &mut self.layout {
            rebase(base, &mut l.graph);
            if let Some(p) = &mut l.pool {
                rebase(base, p);
            }
        }
        if let Some(e) = &mut self.eval {
            rebase(base, &mut e.task);
            rebase(base, &mut e.logs);
        }
        if let Some(c) = &mut self.correlate {
            rebase(base, &mut c.sim);
            rebase(base, &mut c.real);
        }
    }

    /// Enabled stages in dependency order.
    pub fn enabled_stages(&self) -> Vec<Stage> {
        match &self.stages {
            Some(list) => Stage::ALL.into_iter().filter(|s| list.contains(s)).collect(),
            None => Stage::ALL
                .into_iter()
                .filter(|s| match s {
                    Stage::Render | Stage::Segment => self.asset.is_some(),
                    Stage::Retrieve | Stage::Bake => self.asset.is_some() && self.library.is_some(),
                    Stage::Qc => {
                        self.library.is_some() && self.asset.as_ref().is_some_and(|a| a.target_extent.is_some())
                    }
                    Stage::Layout => self.layout.is_some(),
                    Stage::Eval => self.eval.is_some(),
                    Stage::Correlate => self.correlate.is_some(),
                })
                .collect(),
        }
    }

    /// Checks every enabled stage's settings and input paths. Outputs of
    /// upstream stages that are not enabled must already exist.
    pub fn validate(&self) -> Result<Vec<Stage>, PipelineError> {
        let stages = self.enabled_stages();
        let bad = |m: String| Err(PipelineError::Config(m));
        let exists = |what: &str, p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(PipelineError::Config(format!("{what} path {} does not exist", p.display())))
            }
        };
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        for &s in &stages {
            for &up in s.upstream() {
                if !stages.contains(&up) {
                    let key = self.output.join(stage_key_artifact(up));
                    exists(&format!("{s} needs {up} output;"), &key)?;
                }
            }
            match s {
                Stage::Render | Stage::Segment | Stage::Bake | Stage::Qc => {
                    let a = self.asset.as_ref().ok_or_else(|| PipelineError::Config(format!("{s} needs [asset]")))?;
                    exists("asset mesh", &a.mesh)?;
                }
                _ => {}
            }
            match s {
                Stage::Render => {
                    let r = &self.render;
                    if r.views == 0 || r.resolution == 0 {
                        return bad("render views and resolution must be positive".into());
                    }
                    if !(r.fov_deg > 0.0 && r.fov_deg < 180.0) {
                        return bad(format!("render fov_deg {} outside (0, 180)", r.fov_deg));
                    }
                }
                Stage::Segment => {
                    if self.segment.rounds == 0 {
                        return bad("segment rounds must be at least 1".into());
                    }
                }
                Stage::Retrieve | Stage::Bake => {
                    let lib = self.library.as_ref().ok_or_else(|| PipelineError::Config(format!("{s} needs library")))?;
                    exists("library", lib)?;
                    if let Some(c) = &self.category_map {
                        exists("category map", c)?;
                    }
                    if s == Stage::Bake && self.bake.resolution == 0 {
                        return bad("bake resolution must be positive".into());
                    }
                }
                Stage::Qc => {
                    let t = self.asset.as_ref().and_then(|a| a.target_extent);
                    if !t.is_some_and(|t| t > 0.0 && t.is_finite()) {
                        return bad("qc needs a positive asset.target_extent".into());
                    }
                }
                Stage::Layout => {
                    let l = self.layout.as_ref().ok_or_else(|| PipelineError::Config("layout needs [layout]".into()))?;
                    exists("layout graph", &l.graph)?;
                    if let Some(p) = &l.pool {
                        exists("layout pool", p)?;
                    }
                    match l.level {
                        1 => {}
                        2 if l.pool.is_none() => return bad("layout level 2 needs a pool".into()),
                        2 => {}
                        3 if l.relation.is_none() => return bad("layout level 3 needs a relation".into()),
                        3 => {}
                        n => return bad(format!("layout level {n} outside 1..=3")),
                    }
                }
                Stage::Eval => {
                    let e = self.eval.as_ref().ok_or_else(|| PipelineError::Config("eval needs [eval]".into()))?;
                    exists("eval task", &e.task)?;
                    exists("eval logs", &e.logs)?;
                    if !(0.0..=1.0).contains(&e.half_weight) {
                        return bad(format!("half_weight {} outside [0, 1]", e.half_weight));
                    }
                }
                Stage::Correlate => {
                    let c = self
                        .correlate
                        .as_ref()
                        .ok_or_else(|| PipelineError::Config("correlate needs [correlate]".into()))?;
                    exists("sim rates", &c.sim)?;
                    exists("real rates", &c.real)?;
                }
            }
        }
        if self.oracle.mode == OracleMode::Remote {
            if self.oracle.max_in_flight == 0 {
                return bad("oracle max_in_flight must be at least 1".into());
            }
            if self.oracle.endpoint.is_none() && std::env::var(ENV_URL).is_err() {
                return bad(format!("remote oracle needs an endpoint or {ENV_URL}"));
            }
        }
        Ok(stages)
    }

    fn stage_dir(&self, s: Stage) -> PathBuf {
        self.output.join(s.as_str())
    }

    fn asset(&self) -> Result<&AssetConfig, StageFailure> {
        self.asset.as_ref().ok_or_else(|| StageFailure::msg("no asset configured"))
    }

    fn library(&self) -> Result<&Path, StageFailure> {
        self.library.as_deref().ok_or_else(|| StageFailure::msg("no library configured"))
    }

    pub fn oracle(&self, mesh: Option<&TriangleMesh>) -> Result<Box<dyn Oracle>, StageFailure> {
        self.oracle.build(mesh)
    }
}

/// File a downstream stage reads from `s`'s output folder, relative to the
/// output root.
fn stage_key_artifact(s: Stage) -> PathBuf {
    let dir = PathBuf::from(s.as_str());
    match s {
        Stage::Render => dir.join(render::VIEWS_INDEX),
        Stage::Segment => dir.join(segment::MANIFEST_FILE),
        Stage::Retrieve => dir.join(ASSIGNMENTS_FILE),
        Stage::Bake => dir.join("albedo.png"),
        Stage::Qc => dir.join("qc_report.json"),
        Stage::Layout => dir.join("scene.json"),
        Stage::Eval => dir.join("eval_report.json"),
        Stage::Correlate => dir.join("report.json"),
    }
}

// ---------------------------------------------------------------------------
// Manifest

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output root, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub input_hash: String,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    /// Stages of the latest invocation, in run order.
    pub stages: Vec<StageRecord>,
    pub last_good_stage: Option<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Manifest {
    pub fn empty() -> Self {
        Manifest { version: MANIFEST_VERSION, stages: Vec::new(), last_good_stage: None, failed_stage: None, error: None }
    }

    pub fn load(path: &Path) -> Option<Self> {
        let text = std::fs::read_to_string(path).ok()?;
        serde_json::from_str::<Manifest>(&text).ok().filter(|m| m.version == MANIFEST_VERSION)
    }

    pub fn record(&self, s: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == s)
    }

    pub fn artifacts(&self) -> impl Iterator<Item = &Artifact> {
        self.stages.iter().flat_map(|r| &r.artifacts)
    }

    fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(io_err(path))
    }
}

pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Regular files under `dir`, sorted by path.
fn files_under(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| PipelineError::Io {
            path: dir.display().to_string(),
            source: e.into_io_error().unwrap_or_else(|| std::io::Error::other("walk failed")),
        })?;
        if entry.file_type().is_file() {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

fn relative(root: &Path, p: &Path) -> String {
    let rel = p.strip_prefix(root).unwrap_or(p);
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

fn collect_artifacts(root: &Path, dir: &Path) -> Result<Vec<Artifact>, PipelineError> {
    files_under(dir)?
        .into_iter()
        .map(|p| Ok(Artifact { path: relative(root, &p), sha256: sha256_file(&p)? }))
        .collect()
}

/// Hashes a file, or every file below a folder with its relative path.
fn hash_input(h: &mut Sha256, label: &str, path: &Path) -> Result<(), PipelineError> {
    h.update(format!("input {label}\n").as_bytes());
    if path.is_dir() {
        for f in files_under(path)? {
            let bytes = std::fs::read(&f).map_err(io_err(&f))?;
            h.update(format!("file {} {}\n", relative(path, &f), bytes.len()).as_bytes());
            h.update(&bytes);
        }
    } else if path.is_file() {
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        h.update(format!("file {}\n", bytes.len()).as_bytes());
        h.update(&bytes);
    } else {
        h.update(b"missing\n");
    }
    Ok(())
}

/// Settings that change a stage's output. Paths are excluded; the content
/// of every input is hashed instead.
fn stage_params(cfg: &PipelineConfig, s: Stage) -> serde_json::Value {
    use serde_json::json;
    let oracle = json!({
        "mode": cfg.oracle.mode,
        "endpoint": cfg.oracle.endpoint,
        "judge_fixtures": cfg.oracle.judge_fixtures,
    });
    match s {
        Stage::Render => json!(cfg.render),
        Stage::Segment => json!({"segment": cfg.segment, "oracle": oracle}),
        Stage::Retrieve => json!({"retrieve": cfg.retrieve, "oracle": oracle}),
        Stage::Bake => json!(cfg.bake),
        Stage::Qc => json!({
            "qc": cfg.qc,
            "target_extent": cfg.asset.as_ref().and_then(|a| a.target_extent),
            "oracle": oracle,
        }),
        Stage::Layout => {
            let l = cfg.layout.as_ref();
            json!({
                "seed": l.map(|l| l.seed),
                "level": l.map(|l| l.level),
                "relation": l.and_then(|l| l.relation.clone()),
                "max_attempts": l.map(|l| l.max_attempts),
            })
        }
        Stage::Eval => json!({"half_weight": cfg.eval.as_ref().map(|e| e.half_weight), "oracle": oracle}),
        Stage::Correlate => json!({}),
    }
}

fn stage_inputs(cfg: &PipelineConfig, s: Stage) -> Vec<(String, PathBuf)> {
    let mut v: Vec<(String, PathBuf)> = Vec::new();
    let mesh = cfg.asset.as_ref().map(|a| a.mesh.clone());
    let mut push = |label: &str, p: Option<PathBuf>| {
        if let Some(p) = p {
            v.push((label.to_string(), p));
        }
    };
    match s {
        Stage::Render => push("mesh", mesh),
        Stage::Segment | Stage::Qc => push("mesh", mesh),
        Stage::Retrieve => {
            push("library", cfg.library.clone());
            push("category_map", cfg.category_map.clone());
        }
        Stage::Bake => {
            push("mesh", mesh);
            push("library", cfg.library.clone());
        }
        Stage::Layout => {
            let l = cfg.layout.as_ref();
            push("graph", l.map(|l| l.graph.clone()));
            push("pool", l.and_then(|l| l.pool.clone()));
        }
        Stage::Eval => {
            let e = cfg.eval.as_ref();
            push("task", e.map(|e| e.task.clone()));
            push("logs", e.map(|e| e.logs.clone()));
        }
        Stage::Correlate => {
            let c = cfg.correlate.as_ref();
            push("sim", c.map(|c| c.sim.clone()));
            push("real", c.map(|c| c.real.clone()));
        }
    }
    for &up in s.upstream() {
        v.push((format!("stage {up}"), cfg.stage_dir(up)));
    }
    v
}

pub fn input_hash(cfg: &PipelineConfig, s: Stage) -> Result<String, PipelineError> {
    let mut h = Sha256::new();
    h.update(format!("forge {} stage {s}\n", env!("CARGO_PKG_VERSION")).as_bytes());
    h.update(stage_params(cfg, s).to_string().as_bytes());
    h.update(b"\n");
    for (label, path) in stage_inputs(cfg, s) {
        hash_input(&mut h, &label, &path)?;
    }
    Ok(hex::encode(h.finalize()))
}

fn record_still_valid(root: &Path, rec: &StageRecord) -> bool {
    !rec.artifacts.is_empty()
        && rec.artifacts.iter().all(|a| sha256_file(&root.join(&a.path)).is_ok_and(|h| h == a.sha256))
}

// ---------------------------------------------------------------------------
// Run

#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
    pub ran: Vec<Stage>,
    pub skipped: Vec<Stage>,
    /// The failing stage's error, if any; earlier stages stay recorded.
    pub error: Option<PipelineError>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.error.as_ref().map_or(EXIT_OK, PipelineError::exit_code)
    }
}

/// Validates `cfg`, then runs its enabled stages in dependency order.
/// Config problems are returned as `Err` before any stage starts; stage
/// failures end the run and are reported in the outcome and manifest.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunOutcome, PipelineError> {
    let stages = cfg.validate()?;
    std::fs::create_dir_all(&cfg.output).map_err(io_err(&cfg.output))?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| PipelineError::Config(format!("worker pool: {e}")))?;
    pool.install(|| run_stages(cfg, &stages))
}

fn run_stages(cfg: &PipelineConfig, stages: &[Stage]) -> Result<RunOutcome, PipelineError> {
    let manifest_path = cfg.output.join(MANIFEST_FILE);
    let previous = Manifest::load(&manifest_path).unwrap_or_else(Manifest::empty);
    let mut manifest = Manifest::empty();
    let (mut ran, mut skipped) = (Vec::new(), Vec::new());
    let mut error = None;

    for &s in stages {
        let hash = match input_hash(cfg, s) {
            Ok(h) => h,
            Err(e) => {
                error = Some(e);
                manifest.failed_stage = Some(s);
                break;
            }
        };
        if let Some(rec) = previous.record(s).filter(|r| r.input_hash == hash) {
            if record_still_valid(&cfg.output, rec) {
                log::info!("stage {s}: inputs unchanged, skipping");
                manifest.stages.push(rec.clone());
                manifest.last_good_stage = Some(s);
                skipped.push(s);
                continue;
            }
        }
        log::info!("stage {s}: running");
        let dir = cfg.stage_dir(s);
        let result = clear_dir(&dir)
            .map_err(StageFailure::from)
            .and_then(|()| run_stage(cfg, s, &dir))
            .map_err(|f| f.at(s))
            .and_then(|()| collect_artifacts(&cfg.output, &dir));
        match result {
            Ok(artifacts) => {
                log::info!("stage {s}: {} artifacts", artifacts.len());
                manifest.stages.push(StageRecord { stage: s, input_hash: hash, artifacts });
                manifest.last_good_stage = Some(s);
                ran.push(s);
            }
            Err(e) => {
                log::error!("{e}");
                manifest.failed_stage = Some(s);
                manifest.error = Some(e.to_string());
                error = Some(e);
                break;
            }
        }
        manifest.save(&manifest_path)?;
    }
    manifest.save(&manifest_path)?;
    Ok(RunOutcome { manifest, manifest_path, ran, skipped, error })
}

fn clear_dir(dir: &Path) -> Result<(), PipelineError> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

fn run_stage(cfg: &PipelineConfig, s: Stage, dir: &Path) -> Result<(), StageFailure> {
    match s {
        Stage::Render => {
            let mesh = load_mesh(&cfg.asset()?.mesh)?;
            let views = render_stage(&mesh, &cfg.render)?;
            render::save_views(&views, dir)?;
        }
        Stage::Segment => {
            let mesh = load_mesh(&cfg.asset()?.mesh)?;
            let views = render::load_views(&cfg.stage_dir(Stage::Render))?;
            if cfg.oracle.mode == OracleMode::Remote {
                log::warn!("no learned segmenter is bundled; masks come from mesh groups");
            }
            let oracle = cfg.oracle(Some(&mesh))?;
            let segmenter = MockSegmenter::for_mesh(&mesh, MockMode::Group);
            let seg = segment::segment_all(&segmenter, oracle.as_ref(), &views, cfg.segment.rounds)?;
            segment::save_segmentation(&seg, dir)?;
        }
        Stage::Retrieve => {
            let seg = segment::load_segmentation(&cfg.stage_dir(Stage::Segment).join(segment::MANIFEST_FILE))?;
            let index = build_index(cfg.library()?)?;
            let categories = match &cfg.category_map {
                Some(p) => CategoryMap::load(p)?,
                None => CategoryMap::default(),
            };
            let oracle = match cfg.retrieve.mode {
                RetrievalMode::Offline => None,
                RetrievalMode::Oracle => Some(cfg.oracle(None)?),
            };
            let a = retrieve_all(&seg, &index, &cfg.retrieve, oracle.as_deref(), &categories)?;
            write_json(&dir.join(ASSIGNMENTS_FILE), &a)?;
        }
        Stage::Bake => {
            let mesh = load_mesh(&cfg.asset()?.mesh)?;
            let views = render::load_views(&cfg.stage_dir(Stage::Render))?;
            let seg = segment::load_segmentation(&cfg.stage_dir(Stage::Segment).join(segment::MANIFEST_FILE))?;
            let assignments = load_assignments(&cfg.stage_dir(Stage::Retrieve).join(ASSIGNMENTS_FILE))?;
            let index = build_index(cfg.library()?)?;
            let out = bake_asset(&mesh, &views, &seg, &assignments, &index, &cfg.bake)?;
            out.save(dir)?;
        }
        Stage::Qc => {
            let asset = cfg.asset()?;
            let mesh = load_mesh(&asset.mesh)?;
            let albedo = load_rgb_png(&cfg.stage_dir(Stage::Bake).join("albedo.png"))?;
            let target = asset.target_extent.ok_or_else(|| StageFailure::msg("no target_extent"))?;
            let oracle = match cfg.qc.density_source {
                DensitySource::Fixed => None,
                DensitySource::Oracle => Some(cfg.oracle(Some(&mesh))?),
            };
            let (scaled, report) = qc_asset(&mesh, &albedo, target, cfg.qc.density_source, oracle.as_deref())?;
            write_json(&dir.join("qc_report.json"), &report)?;
            save_mesh_json(&scaled, &dir.join(format!("{}.mesh.json", mesh.name())))?;
        }
        Stage::Layout => {
            let l = cfg.layout.as_ref().ok_or_else(|| StageFailure::msg("no layout configured"))?;
            let spec = layout_stage(l)?;
            write_json(&dir.join("scene.json"), &spec)?;
        }
        Stage::Eval => {
            let e = cfg.eval.as_ref().ok_or_else(|| StageFailure::msg("no eval configured"))?;
            let oracle = cfg.oracle(None)?;
            let report = eval_stage(e, oracle.as_ref())?;
            write_json(&dir.join("eval_report.json"), &report)?;
            if let Some(rate) = report.rate {
                let csv = format!("task_id,rate,n_trials\n{},{},{}\n", report.task, rate, report.trials.len());
                std::fs::write(dir.join("rates.csv"), csv).map_err(|e| StageFailure::msg(e.to_string()))?;
            }
        }
        Stage::Correlate => {
            let c = cfg.correlate.as_ref().ok_or_else(|| StageFailure::msg("no correlate configured"))?;
            let report = eval::correlation_report_from_files(&c.sim, &c.real)?;
            write_json(&dir.join("report.json"), &report)?;
        }
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// Stage bodies, shared with the single-stage CLI commands

pub fn render_stage(mesh: &TriangleMesh, r: &RenderConfig) -> Result<Vec<ViewBundle>, StageFailure> {
    let bbox = mesh.bounding_box()?;
    let cams = camera_ring(&bbox, r.views, r.distance_factor, r.fov_deg.to_radians(), (r.resolution, r.resolution))?;
    let ov = if r.no_specular { ShadingOverride::NO_SPECULAR } else { ShadingOverride::none() };
    Ok(render_views(mesh, &cams, &ov, &Shading::default(), mesh.name())?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub part: usize,
    pub name: String,
    pub material: String,
    pub material_id: String,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignments {
    pub mode: RetrievalMode,
    pub assignments: Vec<Assignment>,
}

pub fn load_assignments(path: &Path) -> Result<Assignments, StageFailure> {
    let text = std::fs::read_to_string(path).map_err(|e| StageFailure::msg(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| StageFailure::msg(format!("{}: {e}", path.display())))
}

/// One library material per global part, in part order.
pub fn retrieve_all(
    seg: &Segmentation,
    index: &LibraryIndex,
    r: &RetrieveConfig,
    oracle: Option<&dyn Oracle>,
    categories: &CategoryMap,
) -> Result<Assignments, StageFailure> {
    let mut assignments = Vec::new();
    for (i, part) in seg.parts.parts.iter().enumerate() {
        let rec = material::retrieve(&part.proposal(Vec::new()), index, r.mode, oracle, categories, &r.context)?;
        assignments.push(Assignment {
            part: i,
            name: part.name.clone(),
            material: part.material.clone(),
            material_id: rec.id.clone(),
            category: rec.category.clone(),
        });
    }
    Ok(Assignments { mode: r.mode, assignments })
}

pub struct BakeOutput {
    /// Projected labels before fill.
    pub projected: UvLabelMap,
    pub filled: UvLabelMap,
    pub atlas: uv::BakedAtlas,
    pub report: uv::BakeReport,
}

impl BakeOutput {
    /// Writes `labels.png`, `labels_projected.png`, the atlas maps and
    /// `bake_report.json`.
    pub fn save(&self, dir: &Path) -> Result<(), StageFailure> {
        uv::save_atlas(&self.atlas, dir)?;
        uv::save_label_png(&self.projected, &dir.join("labels_projected.png"))?;
        uv::save_label_png(&self.filled, &dir.join("labels.png"))?;
        write_json(&dir.join("bake_report.json"), &self.report)?;
        Ok(())
    }
}

/// Projects the segmentation masks into UV space, fills unlabeled texels
/// and bakes the assigned materials.
pub fn bake_asset(
    mesh: &TriangleMesh,
    views: &[ViewBundle],
    seg: &Segmentation,
    assignments: &Assignments,
    index: &LibraryIndex,
    b: &BakeConfig,
) -> Result<BakeOutput, StageFailure> {
    let n_parts = seg.parts.parts.len();
    let texels = uv::texel_world_positions(mesh, (b.resolution, b.resolution))?;
    let masks: Vec<ViewMaskSet<'_>> = views
        .iter()
        .map(|v| {
            seg.views
                .get(&v.image_stem)
                .map(|ms| ms.iter().filter(|m| !m.empty).map(|m| (m.part, &m.mask)).collect())
                .unwrap_or_default()
        })
        .collect();
    let projected = uv::project_masks(mesh, &texels, views, &masks, n_parts)?;
    let (filled, islands) = uv::fill_unlabeled(&projected);
    let mut textures: BTreeMap<usize, MaterialTextures> = BTreeMap::new();
    for a in &assignments.assignments {
        if a.part >= n_parts {
            return Err(StageFailure::msg(format!("assignment for unknown part {}", a.part)));
        }
        textures.insert(a.part, index.get(&a.material_id)?.load_textures()?);
    }
    let atlas = uv::bake(&filled, &textures, b.dilation)?;
    let report = uv::BakeReport::new(&filled, islands, &textures, b.dilation);
    Ok(BakeOutput { projected, filled, atlas, report })
}

/// Reads a distractor pool: a JSON array of object declarations.
pub fn load_pool(path: &Path) -> Result<Vec<ObjectDecl>, StageFailure> {
    let text = std::fs::read_to_string(path).map_err(|e| StageFailure::msg(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| StageFailure::msg(format!("{}: {e}", path.display())))
}

pub fn layout_stage(l: &LayoutConfig) -> Result<layout::SceneSpec, StageFailure> {
    let text = std::fs::read_to_string(&l.graph).map_err(|e| StageFailure::msg(format!("{}: {e}", l.graph.display())))?;
    let graph = layout::parse_scene_graph(&text)?;
    let pool = match &l.pool {
        Some(p) => load_pool(p)?,
        None => Vec::new(),
    };
    let level = match (l.level, &l.relation) {
        (1, _) => Level::One,
        (2, _) => Level::Two,
        (3, Some(r)) => Level::Three(r.clone()),
        (3, None) => return Err(StageFailure::msg("level 3 needs a relation")),
        (n, _) => return Err(StageFailure::msg(format!("level {n} outside 1..=3"))),
    };
    let g = layout::randomize_level(&graph, &level, &pool, l.seed)?;
    Ok(layout::solve_layout(&g, l.seed, l.max_attempts)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub log: String,
    pub status: Status,
    pub predicate: String,
    pub frame: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub category: Category,
    pub half_weight: f64,
    /// Success rate; absent for long-horizon tasks.
    pub rate: Option<f64>,
    pub trials: Vec<TrialRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_score: Option<eval::AgentScoreReport>,
}

/// `*.jsonl` files of `dir`, sorted by name.
pub fn log_files(dir: &Path) -> Result<Vec<PathBuf>, StageFailure> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| StageFailure::msg(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(StageFailure::msg(format!("no *.jsonl logs in {}", dir.display())));
    }
    Ok(files)
}

/// Frames for the video judge: the PNGs of `<log stem>_frames/`, sorted.
fn trial_frames(log_path: &Path) -> Result<Vec<RgbImage>, EvalError> {
    let stem = log_path.file_stem().and_then(|s| s.to_str()).unwrap_or("trial");
    let dir = log_path.with_file_name(format!("{stem}_frames"));
    let mut pngs: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|source| EvalError::Io { path: dir.display().to_string(), source })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "png"))
        .collect();
    pngs.sort();
    pngs.iter()
        .map(|p| load_rgb_png(p).map_err(|e| EvalError::Log(format!("{}: {e}", p.display()))))
        .collect()
}

pub fn eval_stage(e: &EvalConfig, judge: &dyn Oracle) -> Result<EvalReport, StageFailure> {
    let text = std::fs::read_to_string(&e.task).map_err(|err| StageFailure::msg(format!("{}: {err}", e.task.display())))?;
    let task = TaskSpec::from_json(&text)?;
    let paths = log_files(&e.logs)?;
    let mut logs = Vec::new();
    for p in &paths {
        let text = std::fs::read_to_string(p).map_err(|err| StageFailure::msg(format!("{}: {err}", p.display())))?;
        logs.push(TrajectoryLog::from_jsonl(&text).map_err(|err| StageFailure::msg(format!("{}: {err}", p.display())))?);
    }
    let names: Vec<String> =
        paths.iter().map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()).collect();
    if task.category == Category::LongHorizon {
        let report = eval::agent_score(&task, &logs, |i, _| trial_frames(&paths[i]), judge)?;
        return Ok(EvalReport {
            task: task.id,
            category: task.category,
            half_weight: e.half_weight,
            rate: None,
            trials: Vec::new(),
            agent_score: Some(report),
        });
    }
    let outcomes = logs.iter().map(|l| eval::evaluate_trial(&task, l)).collect::<Result<Vec<_>, _>>()?;
    let rate = eval::success_rate(&outcomes, e.half_weight)?;
    let trials = names
        .into_iter()
        .zip(outcomes)
        .map(|(log, o)| TrialRecord { log, status: o.status, predicate: o.predicate, frame: o.frame })
        .collect();
    Ok(EvalReport { task: task.id, category: task.category, half_weight: e.half_weight, rate: Some(rate), trials, agent_score: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.as_str().parse::<Stage>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{s}\""));
        }
        assert_eq!(parse_stage_list("layout, eval").unwrap(), [Stage::Layout, Stage::Eval]);
        assert!(parse_stage_list("layout,paint").is_err());
    }

    #[test]
    fn explicit_stage_list_is_ordered() {
        let mut cfg: PipelineConfig = serde_json::from_str(r#"{"output": "out"}"#).unwrap();
        cfg.stages = Some(vec![Stage::Eval, Stage::Layout]);
        assert_eq!(cfg.enabled_stages(), [Stage::Layout, Stage::Eval]);
        cfg.stages = None;
        assert!(cfg.enabled_stages().is_empty());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(PipelineError::Config("x".into()).exit_code(), EXIT_CONFIG);
        let stage = |transport| PipelineError::Stage { stage: Stage::Qc, message: "x".into(), transport };
        assert_eq!(stage(false).exit_code(), EXIT_STAGE);
        assert_eq!(stage(true).exit_code(), EXIT_TRANSPORT);
        let f: StageFailure = SegmentError::Oracle(OracleError::Transport("down".into())).into();
        assert!(f.transport);
        let f: StageFailure = OracleError::MalformedJson("x".into()).into();
        assert!(!f.transport);
    }

    #[test]
    fn relative_paths_rebase() {
        let mut cfg: PipelineConfig =
            serde_json::from_str(r#"{"output": "out", "library": "/abs/lib", "asset": {"mesh": "m.obj"}}"#).unwrap();
        cfg.rebase(Path::new("/cfg"));
        assert_eq!(cfg.output, Path::new("/cfg/out"));
        assert_eq!(cfg.library.as_deref(), Some(Path::new("/abs/lib")));
        assert_eq!(cfg.asset.unwrap().mesh, Path::new("/cfg/m.obj"));
    }

    #[test]
    fn unknown_config_keys_rejected() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"output": "o", "colour": 1}"#).is_err());
    }
}
