//! `forge`: command-line front end for the asset pipeline, layout generator
//! and evaluation harness.
//!
//! Exit codes: 0 ok, 2 config or usage error, 3 stage failure, 4 oracle
//! transport failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use forge_core::material::{build_index, CategoryMap, RetrievalMode};
use forge_core::mesh::{load_mesh, save_mesh_json};
use forge_core::pipeline::{
    self, demo, parse_stage_list, BakeConfig, EvalConfig, LayoutConfig, OracleConfig, OracleMode,
    PipelineConfig, PipelineError, RenderConfig, RetrieveConfig, StageFailure, EXIT_CONFIG, EXIT_OK,
};
use forge_core::qc::{qc_asset, DensitySource};
use forge_core::segment::{self, MockMode, MockSegmenter};
use forge_core::{imaging, render};

#[derive(Parser)]
#[command(name = "forge", version, about = "Asset-material pipeline, layout generation and evaluation harness")]
struct Cli {
    /// More log output (-v info, -vv debug); RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct OracleArgs {
    #[arg(long, default_value = "mock", value_parser = parse_oracle_mode)]
    oracle: OracleMode,
    /// Endpoint for `--oracle remote`; defaults to FORGE_ORACLE_URL.
    #[arg(long)]
    oracle_endpoint: Option<String>,
    #[arg(long, default_value_t = forge_core::oracle::remote::DEFAULT_MAX_IN_FLIGHT)]
    max_in_flight: usize,
}

impl OracleArgs {
    fn config(&self) -> OracleConfig {
        OracleConfig {
            mode: self.oracle,
            endpoint: self.oracle_endpoint.clone(),
            max_in_flight: self.max_in_flight,
            ..OracleConfig::default()
        }
    }
}

fn parse_oracle_mode(s: &str) -> Result<OracleMode, String> {
    s.parse()
}

fn parse_retrieval_mode(s: &str) -> Result<RetrievalMode, String> {
    match s {
        "offline" => Ok(RetrievalMode::Offline),
        "oracle" => Ok(RetrievalMode::Oracle),
        other => Err(format!("unknown mode '{other}' (expected offline or oracle)")),
    }
}

fn parse_density_source(s: &str) -> Result<DensitySource, String> {
    match s {
        "fixed" => Ok(DensitySource::Fixed),
        "oracle" => Ok(DensitySource::Oracle),
        other => Err(format!("unknown density source '{other}' (expected fixed or oracle)")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render the G-buffer camera ring around a mesh.
    Render {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, default_value_t = render::DEFAULT_VIEWS)]
        views: usize,
        #[arg(long, default_value_t = render::DEFAULT_RESOLUTION)]
        res: usize,
        #[arg(long, default_value_t = render::DEFAULT_DISTANCE_FACTOR)]
        distance_factor: f64,
        #[arg(long, default_value_t = render::DEFAULT_VERTICAL_FOV_DEG)]
        fov: f64,
        #[arg(long)]
        no_specular: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Propose parts and refine per-view masks.
    Segment {
        #[arg(long)]
        renders: PathBuf,
        /// The rendered mesh; the bundled segmenter works from its groups.
        #[arg(long)]
        mesh: PathBuf,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long, default_value_t = segment::DEFAULT_ROUNDS)]
        rounds: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pick a library material for every part.
    Retrieve {
        /// Segmentation manifest.
        #[arg(long)]
        parts: PathBuf,
        #[arg(long)]
        library: PathBuf,
        #[arg(long, default_value = "offline", value_parser = parse_retrieval_mode)]
        mode: RetrievalMode,
        #[arg(long)]
        category_map: Option<PathBuf>,
        #[arg(long, default_value = "")]
        context: String,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project masks into UV space and bake the material atlas.
    Bake {
        #[arg(long)]
        mesh: PathBuf,
        /// Folder holding the segmentation manifest and masks.
        #[arg(long)]
        masks: PathBuf,
        /// Folder holding the renders the masks were drawn on.
        #[arg(long)]
        renders: PathBuf,
        #[arg(long)]
        assignments: PathBuf,
        #[arg(long)]
        library: PathBuf,
        #[arg(long, default_value_t = forge_core::uv::DEFAULT_ATLAS_RESOLUTION)]
        res: usize,
        #[arg(long, default_value_t = forge_core::uv::DEFAULT_DILATION)]
        dilation: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply real-world scale, density and the light-bake check.
    Qc {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        albedo: PathBuf,
        /// Largest box side in meters.
        #[arg(long)]
        extent: f64,
        #[arg(long, default_value = "fixed", value_parser = parse_density_source)]
        density_source: DensitySource,
        #[command(flatten)]
        oracle: OracleArgs,
        /// Output folder for the report and the scaled mesh; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Place the objects of a scene graph on the table.
    Layout {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        level: u8,
        #[arg(long)]
        pool: Option<PathBuf>,
        /// Level-3 relation as JSON, e.g. '{"kind":"near","subject":"a","object":"b"}'.
        #[arg(long)]
        relation: Option<String>,
        #[arg(long, default_value_t = forge_core::layout::DEFAULT_MAX_ATTEMPTS)]
        max_attempts: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score trajectory logs against a task's success predicate.
    Eval {
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        logs: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        half_weight: f64,
        #[command(flatten)]
        oracle: OracleArgs,
        /// Report path; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pearson correlation between simulated and real success rates.
    Correlate {
        #[arg(long)]
        sim: PathBuf,
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the configured stages.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated stage list, e.g. `layout,eval`.
        #[arg(long)]
        stages: Option<String>,
        #[arg(long, value_parser = parse_oracle_mode)]
        oracle: Option<OracleMode>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Sample data.
    Demo {
        #[command(subcommand)]
        command: DemoCommand,
    },
}

#[derive(Subcommand)]
enum DemoCommand {
    /// Write the demo project (cube, library, scene, logs, rates, config).
    Init { dir: PathBuf },
}

/// A failed command with its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl From<StageFailure> for Failure {
    fn from(f: StageFailure) -> Self {
        Failure { code: f.exit_code(), message: f.message }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure { code: e.exit_code(), message: e.to_string() }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_CONFIG, message: format!("config error: {}", message.into()) }
}

fn stage<T, E: Into<StageFailure>>(r: Result<T, E>) -> Result<T, Failure> {
    r.map_err(|e| Failure::from(e.into()))
}

fn require(what: &str, p: &Path) -> Result<(), Failure> {
    if p.exists() {
        Ok(())
    } else {
        Err(config_error(format!("{what} path {} does not exist", p.display())))
    }
}

fn emit(value: &impl serde::Serialize, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(p) => {
            pipeline::write_json(p, value)?;
            info!("wrote {}", p.display());
        }
        None => println!("{}", serde_json::to_string_pretty(value).expect("value serializes")),
    }
    Ok(())
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Render { mesh, views, res, distance_factor, fov, no_specular, out } => {
            require("mesh", &mesh)?;
            let m = stage(load_mesh(&mesh))?;
            let cfg = RenderConfig { views, resolution: res, distance_factor, fov_deg: fov, no_specular };
            let bundles = stage(pipeline::render_stage(&m, &cfg))?;
            let files = stage(render::save_views(&bundles, &out))?;
            info!("wrote {} files to {}", files.len(), out.display());
        }
        Command::Segment { renders, mesh, oracle, rounds, out } => {
            require("renders", &renders)?;
            require("mesh", &mesh)?;
            if rounds == 0 {
                return Err(config_error("rounds must be at least 1"));
            }
            let m = stage(load_mesh(&mesh))?;
            let views = stage(render::load_views(&renders))?;
            let o = stage(oracle.config().build(Some(&m)))?;
            let segmenter = MockSegmenter::for_mesh(&m, MockMode::Group);
            let seg = stage(segment::segment_all(&segmenter, o.as_ref(), &views, rounds))?;
            let path = stage(segment::save_segmentation(&seg, &out))?;
            info!("wrote {}", path.display());
        }
        Command::Retrieve { parts, library, mode, category_map, context, oracle, out } => {
            require("parts manifest", &parts)?;
            require("library", &library)?;
            let seg = stage(segment::load_segmentation(&parts))?;
            let index = stage(build_index(&library))?;
            let categories = match &category_map {
                Some(p) => stage(CategoryMap::load(p))?,
                None => CategoryMap::default(),
            };
            let o = match mode {
                RetrievalMode::Offline => None,
                RetrievalMode::Oracle => Some(stage(oracle.config().build(None))?),
            };
            let cfg = RetrieveConfig { mode, context };
            let a = stage(pipeline::retrieve_all(&seg, &index, &cfg, o.as_deref(), &categories))?;
            emit(&a, Some(&out))?;
        }
        Command::Bake { mesh, masks, renders, assignments, library, res, dilation, out } => {
            for (what, p) in [("mesh", &mesh), ("masks", &masks), ("renders", &renders), ("assignments", &assignments), ("library", &library)] {
                require(what, p)?;
            }
            let m = stage(load_mesh(&mesh))?;
            let views = stage(render::load_views(&renders))?;
            let seg = stage(segment::load_segmentation(&masks.join(segment::MANIFEST_FILE)))?;
            let a = pipeline::load_assignments(&assignments)?;
            let index = stage(build_index(&library))?;
            let baked = pipeline::bake_asset(&m, &views, &seg, &a, &index, &BakeConfig { resolution: res, dilation })?;
            baked.save(&out)?;
            info!("wrote atlas to {}", out.display());
        }
        Command::Qc { mesh, albedo, extent, density_source, oracle, out } => {
            require("mesh", &mesh)?;
            require("albedo", &albedo)?;
            let m = stage(load_mesh(&mesh))?;
            let img = stage(imaging::load_rgb_png(&albedo))?;
            let o = match density_source {
                DensitySource::Fixed => None,
                DensitySource::Oracle => Some(stage(oracle.config().build(Some(&m)))?),
            };
            let (scaled, report) = stage(qc_asset(&m, &img, extent, density_source, o.as_deref()))?;
            match &out {
                Some(dir) => {
                    emit(&report, Some(&dir.join("qc_report.json")))?;
                    stage(save_mesh_json(&scaled, &dir.join(format!("{}.mesh.json", m.name()))))?;
                }
                None => emit(&report, None)?,
            }
        }
        Command::Layout { graph, seed, level, pool, relation, max_attempts, out } => {
            require("graph", &graph)?;
            if let Some(p) = &pool {
                require("pool", p)?;
            }
            let relation = relation
                .map(|r| serde_json::from_str(&r).map_err(|e| config_error(format!("--relation: {e}"))))
                .transpose()?;
            let cfg = LayoutConfig { graph, seed, level, pool, relation, max_attempts };
            let spec = pipeline::layout_stage(&cfg)?;
            emit(&spec, Some(&out))?;
        }
        Command::Eval { task, logs, half_weight, oracle, out } => {
            require("task", &task)?;
            require("logs", &logs)?;
            let judge = stage(oracle.config().build(None))?;
            let report = pipeline::eval_stage(&EvalConfig { task, logs, half_weight }, judge.as_ref())?;
            emit(&report, out.as_deref())?;
        }
        Command::Correlate { sim, real, out } => {
            require("sim", &sim)?;
            require("real", &real)?;
            let report = stage(forge_core::eval::correlation_report_from_files(&sim, &real))?;
            emit(&report, out.as_deref())?;
        }
        Command::Run { config, stages, oracle, workers } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(s) = stages {
                cfg.stages = Some(parse_stage_list(&s).map_err(config_error)?);
            }
            if let Some(mode) = oracle {
                cfg.oracle.mode = mode;
            }
            if workers.is_some() {
                cfg.workers = workers;
            }
            let outcome = pipeline::run_pipeline(&cfg)?;
            info!(
                "ran {:?}, skipped {:?}; manifest {}",
                outcome.ran,
                outcome.skipped,
                outcome.manifest_path.display()
            );
            if let Some(e) = outcome.error {
                return Err(e.into());
            }
        }
        Command::Demo { command: DemoCommand::Init { dir } } => {
            let path = demo::write_demo(&dir)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli.command) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}
