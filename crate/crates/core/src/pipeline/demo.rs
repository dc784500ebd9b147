//! A small self-contained project: the six-group cube, a seven-material
//! library, a kitchen scene graph, a put-in task with five trial logs and a
//! pair of rate tables. `forge demo init <dir>` writes it.

use std::path::{Path, PathBuf};

use serde_json::json;

use super::{write_json, PipelineError};
use crate::eval::{Frame, Gripper, ObjectPose, TrajectoryLog};
use crate::imaging::{save_gray_png, save_rgb_png, Image};
use crate::mesh::primitives::unit_cube;

pub const DEMO_CONFIG: &str = "pipeline.json";

/// Simulated and real per-task success rates of one policy on four
/// tabletop tasks.
pub const DEMO_SIM_RATES: &str = "task_id,rate,n_trials
put_spoon_on_towel,0.5,10
put_carrot_on_plate,0.2,10
eggplant_in_pot,0.2,10
eggplant_in_basket,0.5,10
";
pub const DEMO_REAL_RATES: &str = "task_id,rate,n_trials
put_spoon_on_towel,0.417,12
put_carrot_on_plate,0.083,12
eggplant_in_pot,0.1,10
eggplant_in_basket,0.433,30
";

struct DemoMaterial {
    id: &'static str,
    category: &'static str,
    description: &'static str,
    base: [f32; 3],
    roughness_map: bool,
}

const MATERIALS: [DemoMaterial; 7] = [
    DemoMaterial {
        id: "brushed_steel_01",
        category: "metal",
        description: "brushed metal steel surface with fine scratches",
        base: [0.62, 0.63, 0.65],
        roughness_map: true,
    },
    DemoMaterial {
        id: "painted_aluminium_02",
        category: "metal",
        description: "red painted aluminium metal sheet",
        base: [0.7, 0.12, 0.1],
        roughness_map: false,
    },
    DemoMaterial {
        id: "abs_white_01",
        category: "plastic",
        description: "smooth white plastic surface",
        base: [0.85, 0.85, 0.83],
        roughness_map: false,
    },
    DemoMaterial {
        id: "porcelain_01",
        category: "ceramic",
        description: "glazed ceramic porcelain surface",
        base: [0.9, 0.9, 0.95],
        roughness_map: false,
    },
    DemoMaterial {
        id: "oak_03",
        category: "wood",
        description: "oak wood surface with warm grain",
        base: [0.55, 0.38, 0.2],
        roughness_map: true,
    },
    DemoMaterial {
        id: "canvas_01",
        category: "fabric",
        description: "woven fabric canvas surface",
        base: [0.45, 0.5, 0.35],
        roughness_map: false,
    },
    DemoMaterial {
        id: "rubber_black_01",
        category: "rubber",
        description: "black rubber surface",
        base: [0.08, 0.08, 0.09],
        roughness_map: false,
    },
];

const TEX: usize = 16;

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.display().to_string(), source }
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io(parent))?;
    }
    std::fs::write(path, text).map_err(io(path))
}

fn write_material(root: &Path, m: &DemoMaterial) -> Result<(), PipelineError> {
    let dir = root.join(m.id);
    std::fs::create_dir_all(&dir).map_err(io(&dir))?;
    // A faint diagonal stripe so tiling is visible in the atlas.
    let albedo = Image::from_fn(TEX, TEX, |x, y| {
        let k = if (x + y) % 8 < 4 { 1.0 } else { 0.9 };
        m.base.map(|c| c * k)
    });
    let img_err = |e: crate::imaging::ImageError| PipelineError::Config(format!("demo texture: {e}"));
    save_rgb_png(&albedo, &dir.join("albedo.png")).map_err(img_err)?;
    let mut maps = json!({"albedo": "albedo.png"});
    if m.roughness_map {
        let rough = Image::from_fn(TEX, TEX, |x, _| 0.3 + 0.4 * x as f32 / (TEX - 1) as f32);
        save_gray_png(&rough, &dir.join("roughness.png")).map_err(img_err)?;
        maps["roughness"] = json!("roughness.png");
    }
    let record = json!({
        "id": m.id,
        "category": m.category,
        "description": m.description,
        "maps": maps,
        "tile_scale": 2.0,
    });
    write_json(&dir.join(crate::material::RECORD_FILE), &record)
}

fn pose(x: f64, y: f64, z: f64) -> ObjectPose {
    ObjectPose { pos: [x, y, z], yaw: 0.0 }
}

/// Eggplant-into-pot trial: `reach` is where the eggplant ends up, `None`
/// when it is never grasped.
fn trial(reach: Option<[f64; 3]>) -> TrajectoryLog {
    let pot = pose(0.2, 0.0, 0.8);
    let start = [0.0, 0.0, 0.8];
    let mut frames = Vec::new();
    let mut push = |t: f64, e: [f64; 3], held: bool| {
        frames.push(Frame {
            t,
            objects: [("eggplant".to_string(), pose(e[0], e[1], e[2])), ("pot".to_string(), pot)].into(),
            gripper: Gripper { closed: held, held: held.then(|| "eggplant".to_string()) },
            joints: Default::default(),
        });
    };
    push(0.0, start, false);
    match reach {
        None => {
            push(0.5, start, false);
            push(1.0, start, false);
        }
        Some(end) => {
            push(0.5, [0.0, 0.0, 0.9], true);
            push(1.0, [end[0] / 2.0, end[1] / 2.0, 0.92], true);
            push(1.5, [end[0], end[1], end[2] + 0.05], true);
            push(2.0, end, false);
        }
    }
    TrajectoryLog::new(frames).expect("demo trial is well formed")
}

/// Writes the demo project into `dir` and returns the config path.
pub fn write_demo(dir: &Path) -> Result<PathBuf, PipelineError> {
    std::fs::create_dir_all(dir).map_err(io(dir))?;

    write_text(&dir.join("assets/cube.obj"), &unit_cube().to_obj())?;

    let lib = dir.join("library");
    for m in &MATERIALS {
        write_material(&lib, m)?;
    }

    write_json(
        &dir.join("layout/graph.json"),
        &json!({
            "table": {"width": 1.2, "depth": 0.8, "height": 0.75},
            "objects": [
                {"name": "pot", "footprint": [0.24, 0.24], "height": 0.14},
                {"name": "eggplant", "footprint": [0.16, 0.06], "height": 0.06},
                {"name": "towel", "footprint": [0.2, 0.15], "height": 0.01}
            ],
            "relations": [
                {"kind": "on_table", "subject": "pot"},
                {"kind": "on_table", "subject": "eggplant"},
                {"kind": "on_table", "subject": "towel"},
                {"kind": "left_of", "subject": "eggplant", "object": "pot"},
                {"kind": "near", "subject": "towel", "object": "pot", "param": 0.35}
            ]
        }),
    )?;
    write_json(
        &dir.join("layout/pool.json"),
        &json!([
            {"name": "apple", "footprint": [0.08, 0.08], "height": 0.08},
            {"name": "mug", "footprint": [0.1, 0.08], "height": 0.1},
            {"name": "sponge", "footprint": [0.1, 0.07], "height": 0.03},
            {"name": "spoon", "footprint": [0.16, 0.03], "height": 0.02},
            {"name": "tea_box", "footprint": [0.12, 0.08], "height": 0.06}
        ]),
    )?;

    write_json(
        &dir.join("eval/task.json"),
        &json!({
            "id": "eggplant_in_pot",
            "instruction": "put the eggplant in the pot",
            "category": "put_in",
            "level": 1,
            "success": {
                "target": "eggplant",
                "container": {"name": "pot", "half_extents": [0.1, 0.1, 0.1]}
            }
        }),
    )?;
    let trials = [
        Some([0.2, 0.0, 0.83]),
        None,
        Some([0.5, 0.3, 0.8]),
        Some([0.21, 0.02, 0.82]),
        None,
    ];
    for (i, t) in trials.into_iter().enumerate() {
        write_text(&dir.join(format!("eval/logs/trial_{i:02}.jsonl")), &trial(t).to_jsonl())?;
    }

    write_text(&dir.join("rates/sim.csv"), DEMO_SIM_RATES)?;
    write_text(&dir.join("rates/real.csv"), DEMO_REAL_RATES)?;

    let config = json!({
        "output": "out",
        "oracle": {"mode": "mock"},
        "asset": {"mesh": "assets/cube.obj", "target_extent": 0.12},
        "library": "library",
        "render": {"views": 32, "resolution": 512},
        "segment": {"rounds": 3},
        "retrieve": {"mode": "offline", "context": "tabletop kitchen object"},
        "bake": {"resolution": 1024, "dilation": 4},
        "qc": {"density_source": "fixed"},
        "layout": {"graph": "layout/graph.json", "seed": 7, "level": 2, "pool": "layout/pool.json"},
        "eval": {"task": "eval/task.json", "logs": "eval/logs", "half_weight": 0.0},
        "correlate": {"sim": "rates/sim.csv", "real": "rates/real.csv"}
    });
    let path = dir.join(DEMO_CONFIG);
    write_json(&path, &config)?;
    Ok(path)
}
