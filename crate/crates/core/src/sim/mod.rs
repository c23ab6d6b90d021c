//! Fixed-step closed-loop simulation.
//!
//! Each frame: scripts choose agent actions, the expert acts on the current
//! state, every tenth frame is logged, then ego and agents advance together
//! and infractions are checked on the new state.

pub mod expert;
pub mod infractions;
pub mod record;
pub mod scripts;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{advance, FPS};
use crate::par::{self, Parallelism};
use crate::waypoints::{DenseRoute, WaypointError};
use crate::world::{kmh_to_mps, AgentKind, AgentState, EgoState, Pose2D, ScenarioSpec, WorldError};

pub use expert::{Expert, ExpertOutput};
pub use infractions::{InfractionEvent, InfractionKind, InfractionLog};
pub use record::{parse_jsonl, to_jsonl, FrameRecord};
pub use scripts::ScriptRuntime;

/// Frames between logged records (20 FPS control, 2 Hz logging).
pub const LOG_EVERY: u64 = 10;
/// A run with less than [`BLOCKED_PROGRESS_M`] of progress over this many
/// seconds is stopped.
pub const BLOCKED_TIMEOUT_S: f64 = 30.0;
pub const BLOCKED_PROGRESS_M: f64 = 0.1;
/// Distance from the route end at which the route counts as complete.
pub const ROUTE_END_TOLERANCE_M: f64 = 1.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("route: {0}")]
    Route(#[from] WaypointError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimClock {
    pub frame: u64,
}

impl SimClock {
    pub fn sim_time(self) -> f64 {
        self.frame as f64 / FPS as f64
    }

    pub fn is_logged(self) -> bool {
        self.frame.is_multiple_of(LOG_EVERY)
    }
}

/// Number of control frames for a duration cap.
pub fn frame_budget(duration_cap_s: f64) -> u64 {
    (duration_cap_s * FPS as f64).round() as u64
}

/// Records logged by a run of `sim_frames` frames (frames `0..sim_frames`).
pub fn logged_record_count(sim_frames: u64) -> u64 {
    if sim_frames == 0 {
        0
    } else {
        (sim_frames - 1) / LOG_EVERY + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    DurationCap,
    RouteComplete,
    Blocked,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub scenario_id: String,
    pub frames: Vec<FrameRecord>,
    pub infractions: InfractionLog,
    pub completed_arc: f64,
    pub total_arc: f64,
    pub terminated_by: Termination,
    /// Control frames executed.
    pub sim_frames: u64,
}

impl RunResult {
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            scenario_id: self.scenario_id.clone(),
            completed_arc_m: self.completed_arc,
            total_arc_m: self.total_arc,
            terminated_by: self.terminated_by,
            sim_frames: self.sim_frames,
            records: self.frames.len() as u64,
            infractions: self.infractions.clone(),
        }
    }

    pub fn to_jsonl(&self) -> String {
        to_jsonl(&self.frames)
    }
}

/// Serializable closed-loop outcome of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario_id: String,
    pub completed_arc_m: f64,
    pub total_arc_m: f64,
    pub terminated_by: Termination,
    pub sim_frames: u64,
    pub records: u64,
    pub infractions: InfractionLog,
}

/// Ego placed on the route projection of the trigger point, facing along
/// the route.
pub fn spawn_ego(spec: &ScenarioSpec, route: &DenseRoute) -> EgoState {
    let proj = route.project(spec.trigger_point, None);
    let sample = route.sample(proj.s);
    let pose = Pose2D::new(sample.position[0], sample.position[1], sample.heading);
    let mut ego = EgoState::new(pose, kmh_to_mps(spec.ego.initial_speed_kmh), spec.ego.half_length, spec.ego.half_width);
    let wp = route.waypoint_at(proj.s.max(0.0));
    ego.lane_id = wp.lane_id.clone();
    ego.road_id = wp.road_id.clone();
    ego
}

/// Runs one scenario to termination. The seed only selects reason templates;
/// the physics is seed-free.
pub fn run_scenario(spec: &ScenarioSpec, seed: u64) -> Result<RunResult, SimError> {
    spec.validate()?;
    let route = DenseRoute::new(&spec.route)?;
    let cfg = spec.policy_config();
    let mut expert = Expert::new(cfg.clone(), spec.speed_limit_kmh);
    let mut ego = spawn_ego(spec, &route);
    let mut agents: Vec<AgentState> = spec.agent_scripts.iter().map(|s| s.initial.clone()).collect();
    let mut runtimes: Vec<ScriptRuntime> = spec.agent_scripts.iter().map(ScriptRuntime::new).collect();
    let mut volumes = spec.trigger_volumes.clone();
    let mut tracker = infractions::InfractionTracker::default();
    let mut log = InfractionLog::default();
    let mut frames = Vec::new();

    let budget = frame_budget(spec.duration_cap_s);
    let total = route.total_length();
    let mut hint = None;
    let start_s = route.project(ego.pose.position(), None).s;
    let mut best_s = start_s;
    let mut last_progress = (0u64, start_s);
    let mut terminated_by = Termination::DurationCap;
    let mut executed = 0;

    for frame in 0..budget {
        let clock = SimClock { frame };
        let t = clock.sim_time();
        for v in volumes.iter_mut() {
            v.light_state = v.state_at(t);
        }
        scripts::apply_scripts(&mut agents, &mut runtimes, &ego, frame, &cfg.bicycle);
        let out = expert.step(&mut ego, &agents, &volumes, &route, template_seed(seed, frame));
        if clock.is_logged() {
            frames.push(FrameRecord::new(&spec.scenario_id, frame, t, &ego, &agents, &out.record, &out.plan));
        }

        let (pose, speed) = advance(ego.pose, ego.speed_mps(), out.accel, out.wheel_angle, AgentKind::Vehicle, &cfg.bicycle);
        ego.pose = pose;
        ego.set_speed_mps(speed);
        scripts::advance_agents(&mut agents, &cfg.bicycle);
        executed = frame + 1;

        let next = SimClock { frame: frame + 1 };
        let t_next = next.sim_time();
        for v in volumes.iter_mut() {
            v.light_state = v.state_at(t_next);
        }
        let proj = route.project(ego.pose.position(), hint);
        hint = Some(proj.segment);
        best_s = best_s.max(proj.s);
        let input = infractions::InfractionInput {
            frame: next.frame,
            time_s: t_next,
            ego: &ego,
            agents: &agents,
            volumes: &volumes,
            served_stops: expert.served_stops(),
            route_lateral: proj.lateral,
        };
        infractions::check_infractions(&input, &mut tracker, &mut log);

        if proj.s >= total - ROUTE_END_TOLERANCE_M {
            terminated_by = Termination::RouteComplete;
            best_s = total;
            break;
        }
        if best_s - last_progress.1 >= BLOCKED_PROGRESS_M {
            last_progress = (next.frame, best_s);
        } else if (next.frame - last_progress.0) as f64 / FPS as f64 >= BLOCKED_TIMEOUT_S {
            terminated_by = Termination::Blocked;
            break;
        }
    }

    Ok(RunResult {
        scenario_id: spec.scenario_id.clone(),
        frames,
        infractions: log,
        completed_arc: best_s.clamp(0.0, total),
        total_arc: total,
        terminated_by,
        sim_frames: executed,
    })
}

/// Template index for the reason logged at `frame`.
fn template_seed(seed: u64, frame: u64) -> u64 {
    seed.wrapping_add(frame / LOG_EVERY)
}

/// Runs scenarios concurrently when the `parallel` feature is enabled;
/// results keep input order.
pub fn run_batch(specs: &[ScenarioSpec], seed: u64) -> Vec<Result<RunResult, SimError>> {
    run_batch_with(specs, seed, Parallelism::default())
}

pub fn run_batch_sequential(specs: &[ScenarioSpec], seed: u64) -> Vec<Result<RunResult, SimError>> {
    run_batch_with(specs, seed, Parallelism::Sequential)
}

pub fn run_batch_with(specs: &[ScenarioSpec], seed: u64, mode: Parallelism) -> Vec<Result<RunResult, SimError>> {
    par::map(mode, specs, |spec| run_scenario(spec, seed))
}
