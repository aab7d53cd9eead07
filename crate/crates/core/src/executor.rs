//! Closed-loop fold execution: observe, plan the stage trajectory, turn
//! the next slice into a contact action, carry it out in the simulator,
//! and observe again.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::Arc;

use log::{debug, info};
use rayon::prelude::*;

use crate::contact::{slice_actions, slice_bounds, synthesize, ContactAction, EnsembleConfig};
use crate::error::{FoldError, Result};
use crate::garment::{build_garment, Category, FoldStage, GarmentMesh, GarmentSpec, StageId};
use crate::geometry::{chamfer_distance, Point3, PointCloudFrame};
use nalgebra::Vector3;
use crate::instruction::Lexicon;
use crate::metrics::{evaluate, FoldReport, MetricThresholds};
use crate::planner::{plan_arc, rollout_oracle_trajectory, HingePlanner, RolloutParams, Trajectory};
use crate::sim::{Observer, SimParams, Simulator};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Replan from a fresh observation before every action.
    ClosedLoop,
    /// Plan once, execute every slice blind.
    OpenLoop,
    /// Replan every action with a two-frame trajectory.
    NextStep,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::ClosedLoop => "closed-loop",
            Mode::OpenLoop => "open-loop",
            Mode::NextStep => "next-step",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = FoldError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "closed-loop" | "closed" | "closedloop" => Ok(Mode::ClosedLoop),
            "open-loop" | "open" | "openloop" => Ok(Mode::OpenLoop),
            "next-step" | "nextstep" => Ok(Mode::NextStep),
            _ => Err(FoldError::BadParam { field: "mode", reason: format!("unknown `{s}`") }),
        }
    }
}

/// Trajectory source used inside the loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    Hinge,
    /// Simulated rollout on a copy of the current state.
    Rollout,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Hinge => "hinge",
            Backend::Rollout => "rollout",
        })
    }
}

impl FromStr for Backend {
    type Err = FoldError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hinge" => Ok(Backend::Hinge),
            "rollout" => Ok(Backend::Rollout),
            _ => Err(FoldError::BadParam { field: "backend", reason: format!("unknown `{s}`") }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeConfig {
    pub mode: Mode,
    /// Trajectory frames executed per action.
    pub cadence: usize,
    /// Chamfer distance to the stage goal that counts as done, meters.
    pub delta: f64,
    /// Actions allowed per stage.
    pub budget: usize,
    pub ensemble: EnsembleConfig,
    pub backend: Backend,
    /// Frames per planned stage trajectory.
    pub horizon: usize,
    /// Observed points; clamped to the vertex count.
    pub n_points: usize,
    /// Seconds between trajectory frames.
    pub frame_period: f64,
    /// Longest carry per action, meters.
    pub max_step: f64,
    /// Arc height ratio of each carry.
    pub arc_alpha: f64,
    /// Frame cap for settling at episode start and after each stage.
    pub settle_frames: usize,
    /// Frame cap for the cloth to come to rest after each release.
    pub release_frames: usize,
    pub sim: SimParams,
    pub thresholds: MetricThresholds,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            mode: Mode::ClosedLoop,
            cadence: 10,
            delta: 0.02,
            budget: 12,
            ensemble: EnsembleConfig::default(),
            backend: Backend::Hinge,
            horizon: 30,
            n_points: 512,
            frame_period: 0.05,
            max_step: 0.3,
            arc_alpha: 0.1,
            settle_frames: 60,
            release_frames: 20,
            sim: SimParams::default(),
            thresholds: MetricThresholds::default(),
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: &str| Err(FoldError::BadParam { field, reason: reason.into() });
        if self.cadence == 0 {
            return bad("cadence", "must be at least 1");
        }
        if !(self.delta > 0.0) {
            return bad("delta", "must be positive");
        }
        if self.budget == 0 {
            return bad("budget", "must be at least 1");
        }
        if self.horizon < 2 {
            return bad("horizon", "need at least 2 frames");
        }
        if self.mode != Mode::NextStep && self.horizon < self.cadence + 1 {
            return bad("horizon", "must exceed the cadence");
        }
        if !(self.frame_period > 0.0) {
            return bad("frame_period", "must be positive");
        }
        if !(self.max_step > 0.0) {
            return bad("max_step", "must be positive");
        }
        self.ensemble.validate()?;
        self.sim.validate()?;
        self.thresholds.validate()
    }

    fn sim_frames_per_action(&self) -> usize {
        ((self.cadence as f64 * self.frame_period / self.sim.dt).round() as usize).max(1)
    }
}

/// One executed action.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionRecord {
    pub stage: StageId,
    pub index: usize,
    /// FNV-1a hash of the observation the action was computed from.
    pub observation_hash: u64,
    pub vertex: usize,
    pub action: ContactAction,
    pub chamfer_after: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageStatus {
    Converged,
    /// Budget spent (closed loop) or plan exhausted (open loop) short of
    /// the goal.
    Unfinished,
}

impl fmt::Display for StageStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StageStatus::Converged => "converged",
            StageStatus::Unfinished => "unfinished",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageOutcome {
    pub stage: StageId,
    pub status: StageStatus,
    pub actions: usize,
    pub chamfer_to_goal: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeLog {
    pub actions: Vec<ActionRecord>,
    pub stages: Vec<StageOutcome>,
    pub report: Option<FoldReport>,
}

fn hash_frame(frame: &PointCloudFrame) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in &frame.points {
        for c in p.iter() {
            for b in (*c as f32).to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
    }
    h
}

fn fmt_point(p: &Point3) -> String {
    format!("{},{},{}", p.x, p.y, p.z)
}

fn parse_point(s: &str) -> Option<Point3> {
    let mut it = s.split(',').map(|c| c.parse::<f64>());
    let p = Point3::new(it.next()?.ok()?, it.next()?.ok()?, it.next()?.ok()?);
    it.next().is_none().then_some(p)
}

impl EpisodeLog {
    /// One line per record: `action ...`, `stage ...`, and a final
    /// `report ...` line, each a space-separated list of `key=value`.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for a in &self.actions {
            let _ = writeln!(
                out,
                "action stage={} index={} obs={:016x} vertex={} p={} s={} magnitude={} chamfer={}",
                a.stage,
                a.index,
                a.observation_hash,
                a.vertex,
                fmt_point(&a.action.p),
                fmt_point(&a.action.s),
                a.action.magnitude,
                a.chamfer_after
            );
        }
        for s in &self.stages {
            let status = match s.status {
                StageStatus::Converged => "converged",
                StageStatus::Unfinished => "unfinished",
            };
            let _ = writeln!(
                out,
                "stage stage={} status={} actions={} chamfer={}",
                s.stage, status, s.actions, s.chamfer_to_goal
            );
        }
        if let Some(r) = &self.report {
            let _ = writeln!(out, "report {}", r.to_kv().trim_end().replace('\n', " "));
        }
        out
    }

    pub fn from_lines(text: &str) -> Result<EpisodeLog> {
        let mut log = EpisodeLog::default();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let at = offset;
            offset += line.len();
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| FoldError::Parse { offset: at, message };
            let (kind, rest) = line.split_once(' ').ok_or_else(|| err("record without fields".into()))?;
            let fields: std::collections::BTreeMap<&str, &str> =
                rest.split(' ').filter_map(|kv| kv.split_once('=')).collect();
            let get = |k: &str| fields.get(k).copied().ok_or_else(|| err(format!("missing `{k}`")));
            let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| err(format!("bad `{k}`"))) };
            let int = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| err(format!("bad `{k}`"))) };
            let point = |k: &str| -> Result<Point3> { parse_point(get(k)?).ok_or_else(|| err(format!("bad `{k}`"))) };
            let stage = || -> Result<StageId> { get("stage")?.parse().map_err(|_| err("bad `stage`".into())) };
            match kind {
                "action" => log.actions.push(ActionRecord {
                    stage: stage()?,
                    index: int("index")?,
                    observation_hash: u64::from_str_radix(get("obs")?, 16).map_err(|_| err("bad `obs`".into()))?,
                    vertex: int("vertex")?,
                    action: ContactAction { p: point("p")?, s: point("s")?, magnitude: num("magnitude")? },
                    chamfer_after: num("chamfer")?,
                }),
                "stage" => log.stages.push(StageOutcome {
                    stage: stage()?,
                    status: match get("status")? {
                        "converged" => StageStatus::Converged,
                        "unfinished" => StageStatus::Unfinished,
                        other => return Err(err(format!("bad status `{other}`"))),
                    },
                    actions: int("actions")?,
                    chamfer_to_goal: num("chamfer")?,
                }),
                "report" => {
                    let kv = rest.replace(' ', "\n");
                    log.report = Some(FoldReport::from_kv(&kv).map_err(|_| err("bad report".into()))?);
                }
                other => return Err(err(format!("unknown record `{other}`"))),
            }
        }
        Ok(log)
    }
}

/// Mutable per-episode execution state around one simulator.
pub struct Executor {
    pub sim: Simulator,
    observer: Observer,
    planner: HingePlanner,
    config: EpisodeConfig,
}

impl Executor {
    pub fn new(mesh: Arc<GarmentMesh>, config: EpisodeConfig) -> Result<Executor> {
        config.validate()?;
        let sim = Simulator::new(mesh, config.sim.clone())?;
        let n = config.n_points.min(sim.vertex_count());
        let planner = HingePlanner {
            layer_thickness: config.sim.thickness,
            frame_period: config.frame_period,
            ..HingePlanner::default()
        };
        Ok(Executor { sim, observer: Observer::new(n), planner, config })
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn planner(&self) -> &HingePlanner {
        &self.planner
    }

    pub fn observe(&mut self) -> Result<PointCloudFrame> {
        self.observer.observe(&self.sim)
    }

    pub fn settle(&mut self) -> Result<usize> {
        self.sim.settle(5e-3, self.config.settle_frames)
    }

    fn plan(&self, obs: &PointCloudFrame, reference: &[Point3], stage: &FoldStage, m: usize) -> Result<Trajectory> {
        match self.config.backend {
            Backend::Hinge => self.planner.predict_with_reference(obs, reference, stage, m),
            Backend::Rollout => {
                let mut scratch = self.sim.clone();
                scratch.release_all();
                let mut observer = self.observer.clone();
                let params = RolloutParams {
                    duration: self.config.frame_period * (m.max(3) - 2) as f64,
                    settle_frames: 30,
                    ..RolloutParams::default()
                };
                rollout_oracle_trajectory(&mut scratch, &mut observer, stage, m.max(3), &params)
            }
        }
    }

    /// Grasps the vertex nearest `action.p`, carries it along `action.s`
    /// over one cadence of sim frames, releases it and lets the cloth come
    /// to rest for at most `release_frames`.
    fn execute(&mut self, action: &ContactAction) -> Result<usize> {
        let v = self.sim.nearest_vertex(&action.p);
        self.sim.grasp(v)?;
        let start = self.sim.state.positions[v];
        let target = start + action.s * action.magnitude.min(self.config.max_step);
        let frames = self.config.sim_frames_per_action();
        match plan_arc(start, target, frames + 1, self.config.arc_alpha) {
            Ok(arc) => {
                for waypoint in &arc.samples[1..] {
                    self.sim.move_grasp(v, *waypoint)?;
                    self.sim.step()?;
                }
            }
            // Too short to carry: hold still for the same time.
            Err(FoldError::DegenerateSegment) => self.sim.run(frames)?,
            Err(e) => return Err(e),
        }
        self.sim.release(v)?;
        self.sim.settle(5e-3, self.config.release_frames)?;
        Ok(v)
    }

    /// Folds one stage starting from the current (settled) state. The
    /// stage goal is the hinge fold of the state at entry.
    pub fn run_stage(&mut self, stage: &FoldStage, log: &mut EpisodeLog) -> Result<StageOutcome> {
        let reference = self.observe()?;
        let goal = self.planner.folded_pose(&reference.points, stage);
        // Convergence is judged on the points the stage moves: the folded
        // region lands on existing cloth, so a whole-cloud Chamfer distance
        // barely registers a small flap like a sleeve.
        let (moving, fixed): (Vec<usize>, Vec<usize>) = (0..goal.len()).partition(|&i| goal[i] != reference.points[i]);
        // Dragging slides the whole garment a little; the stage target
        // follows the part that is not being folded.
        let drift = |obs: &PointCloudFrame| -> Vector3<f64> {
            if fixed.is_empty() {
                return Vector3::zeros();
            }
            let mut d = fixed.iter().map(|&i| obs.points[i] - reference.points[i]).sum::<Vector3<f64>>();
            d /= fixed.len() as f64;
            d.z = 0.0;
            d
        };
        let shifted = |pts: &[Point3], d: Vector3<f64>| -> Vec<Point3> { pts.iter().map(|q| q + d).collect() };
        let distance = |obs: &PointCloudFrame| -> Result<f64> {
            if moving.is_empty() {
                return Ok(0.0);
            }
            let d = drift(obs);
            let a: Vec<Point3> = moving.iter().map(|&i| obs.points[i]).collect();
            let b: Vec<Point3> = moving.iter().map(|&i| goal[i] + d).collect();
            chamfer_distance(&a, &b)
        };
        let cfg = self.config.clone();
        let mut actions = 0;

        let record = |exec: &mut Executor, log: &mut EpisodeLog, obs: &PointCloudFrame, v, a: ContactAction, i| {
            let after = exec.observe()?;
            let chamfer_after = distance(&after)?;
            debug!("{} action {i}: vertex {v} |s|={:.3} chamfer {:.4}", stage.id, a.magnitude, chamfer_after);
            log.actions.push(ActionRecord {
                stage: stage.id,
                index: i,
                observation_hash: hash_frame(obs),
                vertex: v,
                action: a,
                chamfer_after,
            });
            Ok::<_, FoldError>(())
        };

        let status = match cfg.mode {
            Mode::OpenLoop => {
                let traj = self.plan(&reference, &reference.points, stage, cfg.horizon)?;
                if !traj.converged {
                    for a in slice_actions(&traj, cfg.cadence.min(traj.len() - 1), &cfg.ensemble)? {
                        if actions == cfg.budget {
                            break;
                        }
                        let v = self.execute(&a)?;
                        record(self, log, &reference, v, a, actions)?;
                        actions += 1;
                    }
                }
                if distance(&self.observe()?)? < cfg.delta {
                    StageStatus::Converged
                } else {
                    StageStatus::Unfinished
                }
            }
            Mode::ClosedLoop | Mode::NextStep => loop {
                let obs = self.observe()?;
                if distance(&obs)? < cfg.delta {
                    break StageStatus::Converged;
                }
                // The plan covers what is left of the stage schedule; once
                // the schedule has run out each replan spans one slice.
                let m = match cfg.mode {
                    Mode::NextStep => 2,
                    _ => cfg.horizon.saturating_sub(actions * cfg.cadence).max(cfg.cadence + 1),
                };
                let traj = self.plan(&obs, &shifted(&reference.points, drift(&obs)), stage, m)?;
                if traj.converged {
                    break StageStatus::Converged;
                }
                if actions == cfg.budget {
                    break StageStatus::Unfinished;
                }
                let (a, b) = slice_bounds(traj.len(), cfg.cadence.min(traj.len() - 1))?[0];
                let action = match synthesize(&traj.frame(a), &traj.frame(b), &cfg.ensemble) {
                    Ok(action) => action,
                    Err(FoldError::NoMotion) => break StageStatus::Converged,
                    Err(e) => return Err(e),
                };
                let v = self.execute(&action)?;
                record(self, log, &obs, v, action, actions)?;
                actions += 1;
            },
        };

        self.settle()?;
        let obs = self.observe()?;
        let outcome = StageOutcome { stage: stage.id, status, actions, chamfer_to_goal: distance(&obs)? };
        info!("{} {:?} after {} actions, chamfer {:.4}", stage.id, status, actions, outcome.chamfer_to_goal);
        log.stages.push(outcome.clone());
        Ok(outcome)
    }
}

/// Builds the garment, settles it, parses the instruction into stages,
/// folds each stage in order and scores the result against the analytic
/// goal (every stage's hinge fold composed on the settled pose).
pub fn run_episode(
    spec: &GarmentSpec,
    instruction: &str,
    config: &EpisodeConfig,
    lexicon: &Lexicon,
) -> Result<(FoldReport, EpisodeLog)> {
    let outcome = run_episode_full(spec, instruction, config, lexicon)?;
    Ok((outcome.report, outcome.log))
}

/// Everything an episode produced, including the poses it was scored on.
#[derive(Clone, Debug)]
pub struct EpisodeOutcome {
    pub report: FoldReport,
    pub log: EpisodeLog,
    pub mesh: Arc<GarmentMesh>,
    pub initial: Vec<Point3>,
    pub final_positions: Vec<Point3>,
    pub goal: Vec<Point3>,
}

pub fn run_episode_full(
    spec: &GarmentSpec,
    instruction: &str,
    config: &EpisodeConfig,
    lexicon: &Lexicon,
) -> Result<EpisodeOutcome> {
    config.validate()?;
    let parsed = lexicon.parse_instruction(instruction, spec.category)?;
    let mesh = Arc::new(build_garment(spec)?);
    let stages: Vec<FoldStage> =
        parsed.stages.iter().map(|id| FoldStage::for_garment(*id, &mesh)).collect::<Result<_>>()?;

    let mut exec = Executor::new(mesh.clone(), config.clone())?;
    exec.settle()?;
    let initial = exec.sim.state.positions.clone();
    let mut goal = initial.clone();
    let mut log = EpisodeLog::default();
    for stage in &stages {
        goal = exec.planner().folded_pose(&goal, stage);
        exec.run_stage(stage, &mut log)?;
    }
    let final_positions = exec.sim.state.positions.clone();
    let report = evaluate(&initial, &final_positions, &goal, &mesh.triangles, &config.thresholds)?;
    log.report = Some(report.clone());
    Ok(EpisodeOutcome { report, log, mesh, initial, final_positions, goal })
}

/// One garment and instruction to fold.
#[derive(Clone, Debug)]
pub struct EpisodeJob {
    pub spec: GarmentSpec,
    pub instruction: String,
}

/// Runs independent episodes in parallel; results keep job order.
pub fn run_batch(jobs: &[EpisodeJob], config: &EpisodeConfig, lexicon: &Lexicon) -> Vec<Result<(FoldReport, EpisodeLog)>> {
    jobs.par_iter().map(|job| run_episode(&job.spec, &job.instruction, config, lexicon)).collect()
}

/// The template suite: `count` jittered garments of a category, seeds
/// `base_seed..base_seed + count`, each with the category's default
/// instruction.
pub fn template_suite(category: Category, count: usize, base_seed: u64) -> Vec<EpisodeJob> {
    (0..count as u64)
        .map(|i| EpisodeJob {
            spec: GarmentSpec::jittered(category, base_seed + i),
            instruction: format!("fold the {}", default_garment_word(category)),
        })
        .collect()
}

/// The replan-cadence ablation: closed loop at K = 10, 5 and 15, single
/// action per replan, and open loop, all otherwise as `base`.
pub fn ablation_grid(base: &EpisodeConfig) -> Vec<(&'static str, EpisodeConfig)> {
    let with = |mode, cadence| EpisodeConfig { mode, cadence, ..base.clone() };
    vec![
        ("Ours", with(Mode::ClosedLoop, 10)),
        ("5f", with(Mode::ClosedLoop, 5)),
        ("15f", with(Mode::ClosedLoop, 15)),
        ("NextStep", with(Mode::NextStep, 10)),
        ("w-o-CL", with(Mode::OpenLoop, 10)),
    ]
}

fn default_garment_word(category: Category) -> &'static str {
    match category {
        Category::NoSleeve => "vest",
        Category::ShortSleeve => "t-shirt",
        Category::LongSleeve => "sweater",
        Category::Pants => "pants",
    }
}
