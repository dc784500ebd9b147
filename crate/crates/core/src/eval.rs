//! Policy evaluation: trajectory-log success predicates, success rates,
//! judge-based agent scores and sim-to-real correlation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::RgbImage;
use crate::oracle::{Oracle, OracleError};

pub const H_LIFT: f64 = 0.05;
pub const T_HOLD: f64 = 1.0;
pub const D_NEAR: f64 = 0.10;
pub const DELTA_OPEN: f64 = 0.05;
/// Trials per task and policy in the standard protocol.
pub const DEFAULT_TRIALS: usize = 5;
/// Trials per configuration in ablation studies.
pub const STUDY_TRIALS: usize = 100;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid task '{id}': {msg}")]
    Task { id: String, msg: String },
    #[error("invalid trajectory log: {0}")]
    Log(String),
    #[error("object '{0}' missing from the log")]
    MissingObject(String),
    #[error("joint '{0}' missing from the log")]
    MissingJoint(String),
    #[error("no outcomes")]
    NoOutcomes,
    #[error("half weight {0} outside [0, 1]")]
    HalfWeight(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 values, got {0}")]
    TooFew(usize),
    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),
    #[error("need ≥ 2 shared tasks, found {0}")]
    TooFewShared(usize),
    #[error("bad rates CSV {source_name}: {msg}")]
    Csv { source_name: String, msg: String },
    #[error("agent score needs a long_horizon task and at least one log")]
    AgentScorePrecondition,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    PickUp,
    PutIn,
    PushNear,
    PickFrom,
    Open,
    LongHorizon,
}

impl Category {
    /// Categories where a grasp that misses the target counts as half success.
    pub fn grasp_then_place(self) -> bool {
        self == Category::PutIn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    #[serde(default = "h_lift")]
    pub h_lift: f64,
    #[serde(default = "t_hold")]
    pub t_hold: f64,
    #[serde(default = "d_near")]
    pub d_near: f64,
    #[serde(default = "delta_open")]
    pub delta_open: f64,
}

fn h_lift() -> f64 {
    H_LIFT
}
fn t_hold() -> f64 {
    T_HOLD
}
fn d_near() -> f64 {
    D_NEAR
}
fn delta_open() -> f64 {
    DELTA_OPEN
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { h_lift: H_LIFT, t_hold: T_HOLD, d_near: D_NEAR, delta_open: DELTA_OPEN }
    }
}

/// An object-attached box: centered on the object's logged position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Container {
    pub name: String,
    pub half_extents: [f64; 3],
}

/// A fixed table-plane rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub center: [f64; 2],
    pub half_extents: [f64; 2],
}

impl Region {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (x - self.center[0]).abs() <= self.half_extents[0] && (y - self.center[1]).abs() <= self.half_extents[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuccessSpec {
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub container: Option<Container>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_region: Option<Region>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<String>,
    #[serde(default)]
    pub thresholds: Thresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub id: String,
    pub instruction: String,
    pub category: Category,
    pub level: u8,
    /// Path of the task's SceneSpec, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<String>,
    pub success: SuccessSpec,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |msg: &str| Err(EvalError::Task { id: self.id.clone(), msg: msg.into() });
        let s = &self.success;
        match self.category {
            Category::PutIn if s.container.is_none() => return bad("put_in requires a container"),
            Category::PushNear if s.reference.is_none() => return bad("push_near requires a reference object"),
            Category::PickFrom if s.source_region.is_none() => return bad("pick_from requires a source region"),
            Category::Open if s.joint.is_none() => return bad("open requires a joint"),
            _ => {}
        }
        if !(1..=3).contains(&self.level) {
            return bad("level must be 1, 2 or 3");
        }
        let t = &s.thresholds;
        if ![t.h_lift, t.t_hold, t.d_near, t.delta_open].iter().all(|v| v.is_finite() && *v >= 0.0) {
            return bad("thresholds must be finite and non-negative");
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let t: TaskSpec =
            serde_json::from_str(text).map_err(|e| EvalError::Task { id: "?".into(), msg: e.to_string() })?;
        t.validate()?;
        Ok(t)
    }

    fn objects(&self) -> Vec<&str> {
        let s = &self.success;
        std::iter::once(s.target.as_str())
            .chain(s.container.as_ref().map(|c| c.name.as_str()))
            .chain(s.reference.as_deref())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectPose {
    pub pos: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Gripper {
    pub closed: bool,
    #[serde(default)]
    pub held: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub objects: BTreeMap<String, ObjectPose>,
    #[serde(default)]
    pub gripper: Gripper,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub joints: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    frames: Vec<Frame>,
}

impl TrajectoryLog {
    pub fn new(frames: Vec<Frame>) -> Result<Self, EvalError> {
        let first = frames.first().ok_or_else(|| EvalError::Log("no frames".into()))?;
        let known: BTreeSet<&String> = first.objects.keys().collect();
        for (i, w) in frames.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return Err(EvalError::Log(format!("time not strictly increasing at frame {}", i + 1)));
            }
        }
        for (i, f) in frames.iter().enumerate() {
            if !f.t.is_finite() {
                return Err(EvalError::Log(format!("non-finite time at frame {i}")));
            }
            let names = f.objects.keys().chain(f.gripper.held.as_ref());
            if let Some(n) = names.into_iter().find(|n| !known.contains(n)) {
                return Err(EvalError::Log(format!("frame {i} references '{n}', absent from frame 0")));
            }
        }
        Ok(TrajectoryLog { frames })
    }

    /// One JSON frame per non-empty line.
    pub fn from_jsonl(text: &str) -> Result<Self, EvalError> {
        let frames = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| EvalError::Log(format!("line {}: {e}", i + 1))))
            .collect::<Result<_, _>>()?;
        Self::new(frames)
    }

    pub fn to_jsonl(&self) -> String {
        self.frames.iter().map(|f| serde_json::to_string(f).expect("frame serializes") + "\n").collect()
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    /// The first `n` frames (at least one).
    pub fn prefix(&self, n: usize) -> TrajectoryLog {
        TrajectoryLog { frames: self.frames[..n.clamp(1, self.frames.len())].to_vec() }
    }

    fn pose(&self, frame: usize, name: &str) -> Result<ObjectPose, EvalError> {
        self.frames[frame].objects.get(name).copied().ok_or_else(|| EvalError::MissingObject(name.into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Success,
    HalfSuccess,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub status: Status,
    /// Name of the deciding predicate.
    pub predicate: String,
    /// Frame at which it fired, if it did.
    pub frame: Option<usize>,
}

/// Frames where `target` is held and lifted at least `h_lift` above its
/// initial height.
fn lifted_frames(task: &TaskSpec, log: &TrajectoryLog) -> Result<Vec<usize>, EvalError> {
    let target = &task.success.target;
    let z0 = log.pose(0, target)?.pos[2];
    let mut out = Vec::new();
    for (i, f) in log.frames.iter().enumerate() {
        let held = f.gripper.held.as_deref() == Some(target.as_str());
        if held && log.pose(i, target)?.pos[2] >= z0 + task.success.thresholds.h_lift {
            out.push(i);
        }
    }
    Ok(out)
}

fn outcome(status: Status, predicate: &str, frame: Option<usize>) -> TrialOutcome {
    TrialOutcome { status, predicate: predicate.into(), frame }
}

pub fn evaluate_trial(task: &TaskSpec, log: &TrajectoryLog) -> Result<TrialOutcome, EvalError> {
    task.validate()?;
    for name in task.objects() {
        log.pose(0, name)?;
    }
    let s = &task.success;
    let th = &s.thresholds;
    let last = log.frames.len() - 1;
    let lifted = lifted_frames(task, log)?;
    let grasped = lifted.first().copied();

    let (holds, name, frame) = match task.category {
        Category::PickUp => {
            // Longest run of consecutive lifted frames.
            let mut best: Option<usize> = None;
            let mut run_start = None;
            for (k, &i) in lifted.iter().enumerate() {
                if k == 0 || lifted[k - 1] + 1 != i {
                    run_start = Some(i);
                }
                let start = run_start.expect("set above");
                if best.is_none() && log.frames[i].t - log.frames[start].t >= th.t_hold - 1e-12 {
                    best = Some(i);
                }
            }
            (best.is_some(), "pick_up", best)
        }
        Category::PutIn => {
            let c = s.container.as_ref().expect("validated");
            let p = log.pose(last, &s.target)?.pos;
            let q = log.pose(last, &c.name)?.pos;
            let inside = (0..3).all(|k| (p[k] - q[k]).abs() <= c.half_extents[k]);
            (grasped.is_some() && inside, "put_in", Some(last))
        }
        Category::PushNear => {
            let r = s.reference.as_deref().expect("validated");
            let p = log.pose(last, &s.target)?.pos;
            let q = log.pose(last, r)?.pos;
            let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
            let ever_held = log.frames.iter().any(|f| f.gripper.held.as_deref() == Some(s.target.as_str()));
            (d <= th.d_near && !ever_held, "push_near", Some(last))
        }
        Category::PickFrom => {
            let region = s.source_region.expect("validated");
            let p0 = log.pose(0, &s.target)?.pos;
            (grasped.is_some() && region.contains(p0[0], p0[1]), "pick_from", grasped)
        }
        Category::Open => {
            let j = s.joint.as_deref().expect("validated");
            let ext = *log.frames[last].joints.get(j).ok_or_else(|| EvalError::MissingJoint(j.into()))?;
            (ext >= th.delta_open, "open", Some(last))
        }
        Category::LongHorizon => {
            return Err(EvalError::Task {
                id: task.id.clone(),
                msg: "long_horizon trials are scored by agent_score".into(),
            })
        }
    };
    Ok(if holds {
        outcome(Status::Success, name, frame)
    } else if task.category.grasp_then_place() && grasped.is_some() {
        outcome(Status::HalfSuccess, "grasped", grasped)
    } else {
        outcome(Status::Failure, name, None)
    })
}

/// `(#success + half_weight · #half_success) / n`.
pub fn success_rate(outcomes: &[TrialOutcome], half_weight: f64) -> Result<f64, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::NoOutcomes);
    }
    if !(0.0..=1.0).contains(&half_weight) {
        return Err(EvalError::HalfWeight(half_weight));
    }
    let count = |s: Status| outcomes.iter().filter(|o| o.status == s).count() as f64;
    Ok((count(Status::Success) + half_weight * count(Status::HalfSuccess)) / outcomes.len() as f64)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(EvalError::TooFew(x.len()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(EvalError::ZeroVariance("x"));
    }
    if syy == 0.0 {
        return Err(EvalError::ZeroVariance("y"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentScoreReport {
    pub task: String,
    /// Mean judge score over the trials that were judged.
    pub score: Option<f64>,
    /// Per-trial score, `None` where judging failed.
    pub scores: Vec<Option<f64>>,
    pub failures: usize,
}

/// Mean video-judge score over the trials of a long-horizon task, on the
/// judge's own scale. Trials whose frames or judgment fail are counted and
/// skipped.
pub fn agent_score(
    task: &TaskSpec,
    logs: &[TrajectoryLog],
    frames: impl Fn(usize, &TrajectoryLog) -> Result<Vec<RgbImage>, EvalError>,
    judge: &dyn Oracle,
) -> Result<AgentScoreReport, EvalError> {
    if task.category != Category::LongHorizon || logs.is_empty() {
        return Err(EvalError::AgentScorePrecondition);
    }
    let scores: Vec<Option<f64>> = logs
        .iter()
        .enumerate()
        .map(|(i, log)| {
            let result = frames(i, log).and_then(|f| Ok(judge.judge_video(&f, &task.instruction)?));
            match result {
                Ok(s) => Some(s.score),
                Err(e) => {
                    log::warn!("judging trial {i} of {} failed: {e}", task.id);
                    None
                }
            }
        })
        .collect();
    let ok: Vec<f64> = scores.iter().flatten().copied().collect();
    let score = (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64);
    Ok(AgentScoreReport { task: task.id.clone(), score, failures: scores.len() - ok.len(), scores })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub task_id: String,
    pub rate: f64,
    pub n_trials: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePair {
    pub task: String,
    pub sim_rate: f64,
    pub real_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub pairs: Vec<RatePair>,
    pub r: f64,
    pub n: usize,
}

/// Reads a `task_id,rate,n_trials` CSV.
pub fn parse_rates(text: &str, source_name: &str) -> Result<Vec<RateRow>, EvalError> {
    let err = |msg: String| EvalError::Csv { source_name: source_name.into(), msg };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["task_id", "rate", "n_trials"] {
        return Err(err(format!("expected header task_id,rate,n_trials, got {}", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut seen = BTreeSet::new();
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        let row: RateRow = rec.map_err(|e| err(e.to_string()))?;
        if !(0.0..=1.0).contains(&row.rate) {
            return Err(err(format!("rate {} of task '{}' outside [0, 1]", row.rate, row.task_id)));
        }
        if !seen.insert(row.task_id.clone()) {
            return Err(err(format!("duplicate task '{}'", row.task_id)));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Joins the two rate tables on task id (in `sim` order) and correlates.
pub fn correlation_report(sim: &[RateRow], real: &[RateRow]) -> Result<CorrelationReport, EvalError> {
    let real_by_id: BTreeMap<&str, f64> = real.iter().map(|r| (r.task_id.as_str(), r.rate)).collect();
    let pairs: Vec<RatePair> = sim
        .iter()
        .filter_map(|s| {
            real_by_id
                .get(s.task_id.as_str())
                .map(|&real_rate| RatePair { task: s.task_id.clone(), sim_rate: s.rate, real_rate })
        })
        .collect();
    if pairs.len() < 2 {
        return Err(EvalError::TooFewShared(pairs.len()));
    }
    let x: Vec<f64> = pairs.iter().map(|p| p.sim_rate).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.real_rate).collect();
    Ok(CorrelationReport { r: pearson(&x, &y)?, n: pairs.len(), pairs })
}

pub fn correlation_report_from_files(sim: &Path, real: &Path) -> Result<CorrelationReport, EvalError> {
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|source| EvalError::Io { path: p.display().to_string(), source })
    };
    let s = parse_rates(&read(sim)?, &sim.display().to_string())?;
    let r = parse_rates(&read(real)?, &real.display().to_string())?;
    correlation_report(&s, &r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(category: Category) -> TaskSpec {
        TaskSpec {
            id: "t".into(),
            instruction: "pick up the cup".into(),
            category,
            level: 1,
            scene: None,
            success: SuccessSpec {
                target: "cup".into(),
                container: None,
                reference: None,
                source_region: None,
                joint: None,
                thresholds: Thresholds::default(),
            },
        }
    }

    fn frame(t: f64, z: f64, held: bool) -> Frame {
        let mut objects = BTreeMap::new();
        objects.insert("cup".to_string(), ObjectPose { pos: [0.0, 0.0, z], yaw: 0.0 });
        Frame { t, objects, gripper: Gripper { closed: held, held: held.then(|| "cup".into()) }, joints: BTreeMap::new() }
    }

    #[test]
    fn static_object_fails() {
        let log = TrajectoryLog::new((0..10).map(|i| frame(i as f64 * 0.1, 0.02, false)).collect()).unwrap();
        let o = evaluate_trial(&task(Category::PickUp), &log).unwrap();
        assert_eq!(o.status, Status::Failure);
    }

    #[test]
    fn log_validation() {
        assert!(TrajectoryLog::new(vec![]).is_err());
        assert!(TrajectoryLog::new(vec![frame(0.0, 0.0, false), frame(0.0, 0.0, false)]).is_err());
        let mut f1 = frame(0.1, 0.0, false);
        f1.gripper.held = Some("plate".into());
        assert!(TrajectoryLog::new(vec![frame(0.0, 0.0, false), f1]).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let log = TrajectoryLog::new(vec![frame(0.0, 0.02, false), frame(0.5, 0.2, true)]).unwrap();
        let text = log.to_jsonl();
        assert_eq!(TrajectoryLog::from_jsonl(&text).unwrap(), log);
        let line = r#"{"t": 0.0, "objects": {"cup": {"pos": [0, 0, 0.02], "yaw": 0}}, "gripper": {"closed": false, "held": null}, "joints": {}}"#;
        assert_eq!(TrajectoryLog::from_jsonl(line).unwrap().frames().len(), 1);
    }

    #[test]
    fn task_shape_is_checked() {
        assert!(task(Category::PutIn).validate().is_err());
        assert!(task(Category::Open).validate().is_err());
        assert!(task(Category::PickUp).validate().is_ok());
    }

    #[test]
    fn pearson_errors() {
        assert!(matches!(pearson(&[1.0], &[1.0]), Err(EvalError::TooFew(1))));
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0]), Err(EvalError::LengthMismatch(2, 1))));
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(EvalError::ZeroVariance("x"))));
    }

    #[test]
    fn rates_csv_errors() {
        assert!(parse_rates("task,rate\na,0.5\n", "s").is_err());
        assert!(parse_rates("task_id,rate,n_trials\na,1.5,5\n", "s").is_err());
        assert!(parse_rates("task_id,rate,n_trials\na,0.5,5\na,0.4,5\n", "s").is_err());
    }
}
