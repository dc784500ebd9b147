//! Tabletop layout: scene graphs, seeded rejection-sampling placement and
//! constraint validation.
//!
//! Table-plane coordinates have their origin at the table center, `x`
//! along the width (left to right) and `y` along the depth (front to back,
//! so "behind" means larger `y`).

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MAX_ATTEMPTS: usize = 10_000;
/// Minimum gap between footprints.
pub const CLEARANCE_MARGIN: f64 = 0.01;
/// Margin for the directional relations.
pub const RELATION_MARGIN: f64 = 0.02;
pub const LEVEL2_DISTRACTORS: usize = 3;
/// Samples per object before a scene attempt is abandoned.
const OBJECT_RETRIES: usize = 64;
const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error("invalid scene graph: {0}")]
    Parse(String),
    #[error("unknown relation kind '{0}'")]
    UnknownKind(String),
    #[error("dangling reference '{0}'")]
    Dangling(String),
    #[error("invalid scene graph: {0}")]
    Invalid(String),
    #[error("object '{name}' does not fit on the table")]
    TooLarge { name: String },
    #[error("no feasible layout after {attempts} attempts; most violated: {worst}")]
    Infeasible { attempts: usize, worst: Violation },
    #[error("distractor pool has {have} usable objects, need {need}")]
    PoolTooSmall { have: usize, need: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub width: f64,
    pub depth: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectDecl {
    pub name: String,
    /// `[x extent, y extent]` in meters at yaw 0.
    pub footprint: [f64; 2],
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    OnTable,
    Near,
    LeftOf,
    RightOf,
    Behind,
    InFrontOf,
    Inside,
}

impl RelationKind {
    pub const ALL: [RelationKind; 7] = [
        RelationKind::OnTable,
        RelationKind::Near,
        RelationKind::LeftOf,
        RelationKind::RightOf,
        RelationKind::Behind,
        RelationKind::InFrontOf,
        RelationKind::Inside,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::OnTable => "on_table",
            RelationKind::Near => "near",
            RelationKind::LeftOf => "left_of",
            RelationKind::RightOf => "right_of",
            RelationKind::Behind => "behind",
            RelationKind::InFrontOf => "in_front_of",
            RelationKind::Inside => "inside",
        }
    }

    pub fn parse(s: &str) -> Result<Self, LayoutError> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| LayoutError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub kind: RelationKind,
    pub subject: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<f64>,
}

impl Relation {
    pub fn new(kind: RelationKind, subject: &str, object: Option<&str>, param: Option<f64>) -> Self {
        Relation { kind, subject: subject.into(), object: object.map(Into::into), param }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub table: Table,
    pub objects: Vec<ObjectDecl>,
    pub relations: Vec<Relation>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRelation {
    kind: String,
    subject: String,
    #[serde(default)]
    object: Option<String>,
    #[serde(default)]
    param: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraph {
    table: Table,
    objects: Vec<ObjectDecl>,
    #[serde(default)]
    relations: Vec<RawRelation>,
}

impl SceneGraph {
    pub fn object(&self, name: &str) -> Option<&ObjectDecl> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn validate(&self) -> Result<(), LayoutError> {
        let t = &self.table;
        if !(t.width > 0.0 && t.depth > 0.0 && t.height > 0.0) {
            return Err(LayoutError::Invalid("table dimensions must be positive".into()));
        }
        let mut names = BTreeSet::new();
        for o in &self.objects {
            if !names.insert(o.name.as_str()) {
                return Err(LayoutError::Invalid(format!("duplicate object '{}'", o.name)));
            }
            if !(o.footprint[0] > 0.0 && o.footprint[1] > 0.0 && o.height > 0.0) {
                return Err(LayoutError::Invalid(format!("object '{}' needs positive dimensions", o.name)));
            }
        }
        for r in &self.relations {
            if !names.contains(r.subject.as_str()) {
                return Err(LayoutError::Dangling(r.subject.clone()));
            }
            match (r.kind, &r.object) {
                (RelationKind::OnTable, Some(_)) => {
                    return Err(LayoutError::Invalid("on_table takes no object".into()))
                }
                (RelationKind::OnTable, None) => {}
                (k, None) => return Err(LayoutError::Invalid(format!("{} needs an object", k.as_str()))),
                (_, Some(o)) if !names.contains(o.as_str()) => return Err(LayoutError::Dangling(o.clone())),
                (_, Some(o)) if *o == r.subject => {
                    return Err(LayoutError::Invalid(format!("'{o}' related to itself")))
                }
                _ => {}
            }
            if r.kind == RelationKind::Near && !r.param.is_some_and(|d| d > 0.0) {
                return Err(LayoutError::Invalid("near needs a positive distance param".into()));
            }
        }
        Ok(())
    }
}

pub fn parse_scene_graph(doc: &str) -> Result<SceneGraph, LayoutError> {
    let raw: RawGraph = serde_json::from_str(doc).map_err(|e| LayoutError::Parse(e.to_string()))?;
    let relations = raw
        .relations
        .into_iter()
        .map(|r| {
            Ok(Relation { kind: RelationKind::parse(&r.kind)?, subject: r.subject, object: r.object, param: r.param })
        })
        .collect::<Result<_, LayoutError>>()?;
    let g = SceneGraph { table: raw.table, objects: raw.objects, relations };
    g.validate()?;
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedPlacement {
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub table: Table,
    pub placements: Vec<NamedPlacement>,
    pub graph: SceneGraph,
}

impl SceneSpec {
    pub fn placement(&self, name: &str) -> Option<&NamedPlacement> {
        self.placements.iter().find(|p| p.name == name)
    }
}

/// Half extents of the yaw-rotated footprint's axis-aligned box.
pub fn rotated_half_extents(footprint: [f64; 2], yaw: f64) -> (f64, f64) {
    let (s, c) = yaw.sin_cos();
    let (hx, hy) = (footprint[0] * 0.5, footprint[1] * 0.5);
    (hx * c.abs() + hy * s.abs(), hx * s.abs() + hy * c.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// `bounds`, `clearance`, `pose` or a relation kind.
    pub kind: String,
    pub subject: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    /// Signed margin; negative when violated.
    pub slack: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.object {
            Some(o) => write!(f, "{}({}, {}) slack {:.4}", self.kind, self.subject, o, self.slack),
            None => write!(f, "{}({}) slack {:.4}", self.kind, self.subject, self.slack),
        }
    }
}

struct Ctx<'a> {
    table: Table,
    decl: BTreeMap<&'a str, &'a ObjectDecl>,
    inside_pairs: BTreeSet<(&'a str, &'a str)>,
}

impl<'a> Ctx<'a> {
    fn new(g: &'a SceneGraph) -> Self {
        let decl = g.objects.iter().map(|o| (o.name.as_str(), o)).collect();
        let mut inside_pairs = BTreeSet::new();
        for r in g.relations.iter().filter(|r| r.kind == RelationKind::Inside) {
            let o = r.object.as_deref().expect("validated");
            inside_pairs.insert((r.subject.as_str(), o));
            inside_pairs.insert((o, r.subject.as_str()));
        }
        Ctx { table: g.table, decl, inside_pairs }
    }

    fn half(&self, name: &str, p: &Placement) -> (f64, f64) {
        rotated_half_extents(self.decl[name].footprint, p.yaw)
    }

    fn bounds_slack(&self, name: &str, p: &Placement) -> f64 {
        let (hx, hy) = self.half(name, p);
        let (tw, td) = (self.table.width * 0.5, self.table.depth * 0.5);
        (tw - (p.x + hx)).min((p.x - hx) + tw).min(td - (p.y + hy)).min((p.y - hy) + td)
    }

    /// Gap between the two footprints minus the clearance margin.
    fn clearance_slack(&self, a: &str, pa: &Placement, b: &str, pb: &Placement) -> Option<f64> {
        if self.inside_pairs.contains(&(a, b)) {
            return None;
        }
        let (ax, ay) = self.half(a, pa);
        let (bx, by) = self.half(b, pb);
        let gx = (pa.x - pb.x).abs() - (ax + bx);
        let gy = (pa.y - pb.y).abs() - (ay + by);
        Some(gx.max(gy) - CLEARANCE_MARGIN)
    }

    fn relation_slack(&self, r: &Relation, s: &Placement, o: Option<&Placement>) -> f64 {
        let m = RELATION_MARGIN;
        match (r.kind, o) {
            (RelationKind::OnTable, _) => self.bounds_slack(&r.subject, s),
            (RelationKind::Near, Some(o)) => r.param.unwrap_or(0.0) - ((s.x - o.x).powi(2) + (s.y - o.y).powi(2)).sqrt(),
            (RelationKind::LeftOf, Some(o)) => (o.x - m) - s.x,
            (RelationKind::RightOf, Some(o)) => s.x - (o.x + m),
            (RelationKind::Behind, Some(o)) => s.y - (o.y + m),
            (RelationKind::InFrontOf, Some(o)) => (o.y - m) - s.y,
            (RelationKind::Inside, Some(o)) => {
                let (hx, hy) = self.half(r.object.as_deref().expect("validated"), o);
                let planar = (hx - (s.x - o.x).abs()).min(hy - (s.y - o.y).abs());
                planar.min(-(s.z - o.z).abs())
            }
            (_, None) => f64::NEG_INFINITY,
        }
    }
}

fn pose_slack(table: &Table, p: &NamedPlacement) -> f64 {
    let z = -(p.z - table.height).abs();
    let yaw = if (0.0..TAU).contains(&p.yaw) { 0.0 } else { -1.0 };
    z.min(yaw)
}

/// Every violated bound, clearance, pose and relation of `spec`; empty iff
/// the spec is valid. Never fails.
pub fn validate(spec: &SceneSpec) -> Vec<Violation> {
    let g = &spec.graph;
    let ctx = Ctx::new(g);
    let mut out = Vec::new();
    let poses: BTreeMap<&str, Placement> = spec
        .placements
        .iter()
        .map(|p| (p.name.as_str(), Placement { x: p.x, y: p.y, z: p.z, yaw: p.yaw }))
        .collect();
    for o in &g.objects {
        if !poses.contains_key(o.name.as_str()) {
            out.push(Violation { kind: "missing".into(), subject: o.name.clone(), object: None, slack: f64::NEG_INFINITY });
        }
    }
    let known: Vec<&NamedPlacement> = spec.placements.iter().filter(|p| ctx.decl.contains_key(p.name.as_str())).collect();
    for p in &known {
        let pose = &poses[p.name.as_str()];
        let b = ctx.bounds_slack(&p.name, pose);
        if b < -TOLERANCE {
            out.push(Violation { kind: "bounds".into(), subject: p.name.clone(), object: None, slack: b });
        }
        let ps = pose_slack(&spec.table, p);
        if ps < 0.0 {
            out.push(Violation { kind: "pose".into(), subject: p.name.clone(), object: None, slack: ps });
        }
    }
    for (i, a) in known.iter().enumerate() {
        for b in &known[i + 1..] {
            if let Some(s) = ctx.clearance_slack(&a.name, &poses[a.name.as_str()], &b.name, &poses[b.name.as_str()]) {
                if s < -TOLERANCE {
                    out.push(Violation { kind: "clearance".into(), subject: a.name.clone(), object: Some(b.name.clone()), slack: s });
                }
            }
        }
    }
    for r in &g.relations {
        let Some(s) = poses.get(r.subject.as_str()) else { continue };
        let o = r.object.as_deref().and_then(|o| poses.get(o));
        if r.object.is_some() && o.is_none() {
            continue;
        }
        let slack = ctx.relation_slack(r, s, o);
        if slack < -TOLERANCE {
            out.push(Violation { kind: r.kind.as_str().into(), subject: r.subject.clone(), object: r.object.clone(), slack });
        }
    }
    out
}

/// Objects ordered so that every relation's object precedes its subject;
/// declaration order breaks ties and objects on cycles keep theirs.
fn placement_order(g: &SceneGraph) -> Vec<usize> {
    let n = g.objects.len();
    let idx: BTreeMap<&str, usize> = g.objects.iter().enumerate().map(|(i, o)| (o.name.as_str(), i)).collect();
    let mut preds: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for r in &g.relations {
        if let Some(o) = &r.object {
            preds[idx[r.subject.as_str()]].insert(idx[o.as_str()]);
        }
    }
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let next = (0..n)
            .find(|&i| !done[i] && preds[i].iter().all(|&p| done[p]))
            .unwrap_or_else(|| (0..n).find(|&i| !done[i]).expect("objects remain"));
        done[next] = true;
        order.push(next);
    }
    order
}

fn fits(table: &Table, footprint: [f64; 2]) -> bool {
    let [a, b] = footprint;
    (a <= table.width && b <= table.depth) || (b <= table.width && a <= table.depth)
}

/// Seeded rejection sampling: objects are drawn in relation order, each
/// with a few local retries against the constraints involving objects
/// already placed; a scene attempt restarts from scratch when an object
/// cannot be placed. Identical `(graph, seed)` give identical output.
pub fn solve_layout(graph: &SceneGraph, seed: u64, max_attempts: usize) -> Result<SceneSpec, LayoutError> {
    graph.validate()?;
    for o in &graph.objects {
        if !fits(&graph.table, o.footprint) {
            return Err(LayoutError::TooLarge { name: o.name.clone() });
        }
    }
    let ctx = Ctx::new(graph);
    let order = placement_order(graph);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Violation> = None;
    let z = graph.table.height;

    for _ in 0..max_attempts.max(1) {
        let mut placed: BTreeMap<&str, Placement> = BTreeMap::new();
        let mut failed = None;
        for &oi in &order {
            let name = graph.objects[oi].name.as_str();
            let mut last = None;
            for _ in 0..OBJECT_RETRIES {
                let p = sample_pose(&ctx, graph, name, &placed, z, &mut rng);
                match worst_local(&ctx, graph, name, &p, &placed) {
                    None => {
                        last = None;
                        placed.insert(name, p);
                        break;
                    }
                    Some(v) => last = Some(v),
                }
            }
            if let Some(v) = last {
                failed = Some(v);
                break;
            }
        }
        match failed {
            None => {
                let spec = SceneSpec {
                    seed,
                    table: graph.table,
                    placements: graph
                        .objects
                        .iter()
                        .map(|o| {
                            let p = placed[o.name.as_str()];
                            NamedPlacement { name: o.name.clone(), x: p.x, y: p.y, z: p.z, yaw: p.yaw }
                        })
                        .collect(),
                    graph: graph.clone(),
                };
                debug_assert!(validate(&spec).is_empty());
                return Ok(spec);
            }
            Some(v) => {
                if best.as_ref().map_or(true, |b| v.slack > b.slack) {
                    best = Some(v);
                }
            }
        }
    }
    Err(LayoutError::Infeasible { attempts: max_attempts.max(1), worst: best.expect("an attempt failed") })
}

fn sample_pose(
    ctx: &Ctx<'_>,
    g: &SceneGraph,
    name: &str,
    placed: &BTreeMap<&str, Placement>,
    z: f64,
    rng: &mut ChaCha8Rng,
) -> Placement {
    let mut yaw = rng.random::<f64>() * TAU;
    if yaw >= TAU {
        yaw = 0.0;
    }
    let mut p = Placement { x: 0.0, y: 0.0, z, yaw };
    // Containers and near partners narrow the sampling region.
    let anchor = g.relations.iter().find_map(|r| {
        let o = placed.get(r.object.as_deref()?)?;
        (r.subject == name).then_some((r, o))
    });
    match anchor {
        Some((r, o)) if r.kind == RelationKind::Inside => {
            let (hx, hy) = ctx.half(r.object.as_deref().expect("validated"), o);
            p.x = o.x + rng.random_range(-hx..=hx);
            p.y = o.y + rng.random_range(-hy..=hy);
            p.z = o.z;
        }
        Some((r, o)) if r.kind == RelationKind::Near => {
            let d = r.param.expect("validated");
            p.x = o.x + rng.random_range(-d..=d);
            p.y = o.y + rng.random_range(-d..=d);
        }
        _ => {
            let (hx, hy) = ctx.half(name, &p);
            let (rx, ry) = ((ctx.table.width * 0.5 - hx).max(0.0), (ctx.table.depth * 0.5 - hy).max(0.0));
            p.x = rng.random_range(-rx..=rx);
            p.y = rng.random_range(-ry..=ry);
        }
    }
    p
}

/// Most violated constraint between `name` at `p` and the placed objects.
fn worst_local(
    ctx: &Ctx<'_>,
    g: &SceneGraph,
    name: &str,
    p: &Placement,
    placed: &BTreeMap<&str, Placement>,
) -> Option<Violation> {
    let mut worst: Option<Violation> = None;
    let mut consider = |v: Violation| {
        if v.slack < -TOLERANCE && worst.as_ref().map_or(true, |w| v.slack < w.slack) {
            worst = Some(v);
        }
    };
    consider(Violation { kind: "bounds".into(), subject: name.into(), object: None, slack: ctx.bounds_slack(name, p) });
    for (&other, q) in placed {
        if let Some(s) = ctx.clearance_slack(name, p, other, q) {
            consider(Violation { kind: "clearance".into(), subject: name.into(), object: Some(other.into()), slack: s });
        }
    }
    for r in &g.relations {
        let (s, o) = match r.object.as_deref() {
            None if r.subject == name => (p, None),
            None => continue,
            Some(o) if r.subject == name => match placed.get(o) {
                Some(q) => (p, Some(q)),
                None => continue,
            },
            Some(o) if o == name => match placed.get(r.subject.as_str()) {
                Some(q) => (q, Some(p)),
                None => continue,
            },
            _ => continue,
        };
        consider(Violation {
            kind: r.kind.as_str().into(),
            subject: r.subject.clone(),
            object: r.object.clone(),
            slack: ctx.relation_slack(r, s, o),
        });
    }
    worst
}

#[derive(Debug, Clone, PartialEq)]
pub enum Level {
    /// The base scene.
    One,
    /// Three extra background objects from the pool.
    Two,
    /// The base scene with one added relation; objects it names that are
    /// not in the scene are taken from the pool.
    Three(Relation),
}

/// Derives a harder variant of `base`. Deterministic per seed.
pub fn randomize_level(
    base: &SceneGraph,
    level: &Level,
    pool: &[ObjectDecl],
    seed: u64,
) -> Result<SceneGraph, LayoutError> {
    let mut g = base.clone();
    match level {
        Level::One => {}
        Level::Two => {
            let usable: Vec<&ObjectDecl> = pool.iter().filter(|o| base.object(&o.name).is_none()).collect();
            if usable.len() < LEVEL2_DISTRACTORS {
                return Err(LayoutError::PoolTooSmall { have: usable.len(), need: LEVEL2_DISTRACTORS });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picks = sample(&mut rng, usable.len(), LEVEL2_DISTRACTORS).into_vec();
            picks.sort_unstable();
            for i in picks {
                g.objects.push(usable[i].clone());
                g.relations.push(Relation::new(RelationKind::OnTable, &usable[i].name, None, None));
            }
        }
        Level::Three(rel) => {
            for name in std::iter::once(&rel.subject).chain(rel.object.as_ref()) {
                if g.object(name).is_none() {
                    let o = pool.iter().find(|o| &o.name == name).ok_or_else(|| LayoutError::Dangling(name.clone()))?;
                    g.objects.push(o.clone());
                }
            }
            g.relations.push(rel.clone());
        }
    }
    g.validate()?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"table": {"width": 1.0, "depth": 0.6, "height": 0.75},
        "objects": [{"name": "cup", "footprint": [0.08, 0.08], "height": 0.1}],
        "relations": [{"kind": "on_table", "subject": "cup"}]}"#;

    #[test]
    fn parses_minimal_scene() {
        let g = parse_scene_graph(MINIMAL).unwrap();
        assert_eq!(g.objects.len(), 1);
        assert_eq!(g.relations[0].kind, RelationKind::OnTable);
    }

    #[test]
    fn parse_errors() {
        let bad = MINIMAL.replace("on_table", "floats_above");
        assert_eq!(parse_scene_graph(&bad).unwrap_err().to_string(), "unknown relation kind 'floats_above'");
        let dangling = MINIMAL.replace(
            r#"{"kind": "on_table", "subject": "cup"}"#,
            r#"{"kind": "near", "subject": "cup", "object": "book", "param": 0.1}"#,
        );
        assert_eq!(parse_scene_graph(&dangling).unwrap_err().to_string(), "dangling reference 'book'");
        let flat = MINIMAL.replace("\"height\": 0.1", "\"height\": 0.0");
        assert!(matches!(parse_scene_graph(&flat), Err(LayoutError::Invalid(_))));
    }

    #[test]
    fn single_object_lands_on_table() {
        let g = parse_scene_graph(MINIMAL).unwrap();
        for seed in 0..20 {
            let s = solve_layout(&g, seed, DEFAULT_MAX_ATTEMPTS).unwrap();
            assert_eq!(s.placements[0].z, 0.75);
            assert!(validate(&s).is_empty());
        }
    }

    #[test]
    fn oversized_object_is_infeasible() {
        let mut g = parse_scene_graph(MINIMAL).unwrap();
        g.objects[0].footprint = [2.0, 0.1];
        assert!(matches!(solve_layout(&g, 0, 10), Err(LayoutError::TooLarge { .. })));
    }

    #[test]
    fn rotated_extents() {
        let (hx, hy) = rotated_half_extents([0.2, 0.1], std::f64::consts::FRAC_PI_2);
        assert!((hx - 0.05).abs() < 1e-12 && (hy - 0.1).abs() < 1e-12);
    }

    #[test]
    fn cycles_keep_declaration_order() {
        let mut g = parse_scene_graph(MINIMAL).unwrap();
        g.objects.push(ObjectDecl { name: "plate".into(), footprint: [0.2, 0.2], height: 0.02 });
        g.relations.push(Relation::new(RelationKind::Near, "cup", Some("plate"), Some(0.3)));
        g.relations.push(Relation::new(RelationKind::Near, "plate", Some("cup"), Some(0.3)));
        assert_eq!(placement_order(&g), vec![0, 1]);
        let s = solve_layout(&g, 3, DEFAULT_MAX_ATTEMPTS).unwrap();
        assert!(validate(&s).is_empty());
    }
}
