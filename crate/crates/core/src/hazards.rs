//! Emergency-brake hazard checks: red lights, stop signs and predicted
//! collisions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{lateral_control, longitudinal_control, ControlCommand, PidController, VehicleDynamics};
use crate::kinematics::{advance, obb_min_distance, obb_overlap, predict_agent_rollout, BicycleParams, Rollout};
use crate::par::{self, Parallelism};
use crate::waypoints::{plan_from_projection, DenseRoute};
use crate::world::{
    AgentKind, AgentState, EgoState, LaneRef, LightState, Obb2d, TriggerKind, TriggerVolume,
};

/// Maximum braking deceleration assumed by the safety distance, m/s².
pub const BRAKE_DECEL_MAX: f64 = 5.0;

#[derive(Debug, Error, PartialEq)]
pub enum HazardError {
    #[error("speed must be >= 0 km/h, got {0}")]
    NegativeSpeed(f64),
}

/// Length of the forward safety box: 3 m below 30 km/h, otherwise the
/// braking distance at [`BRAKE_DECEL_MAX`] minus 4 m.
pub fn safety_distance(speed_kmh: f64) -> Result<f64, HazardError> {
    if !(speed_kmh >= 0.0) {
        return Err(HazardError::NegativeSpeed(speed_kmh));
    }
    Ok(if speed_kmh < 30.0 {
        3.0
    } else {
        let v = speed_kmh / 3.6;
        v * v / (2.0 * BRAKE_DECEL_MAX) - 4.0
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HazardConfig {
    pub yellow_is_red: bool,
    /// An agent becomes dangerous after more than this many consecutive
    /// frames with a predicted overlap.
    pub dangerous_after_frames: u32,
    /// Proximity that counts as a collision with a dangerous agent, meters.
    pub dangerous_distance_m: f64,
    /// Ego speed at and above which the long horizon applies.
    pub long_horizon_speed_kmh: f64,
    pub short_horizon_frames: usize,
    pub long_horizon_frames: usize,
    /// Route distance scanned for planned lanes beyond the safety box.
    pub planned_lane_lookahead_m: f64,
}

impl Default for HazardConfig {
    fn default() -> Self {
        Self {
            yellow_is_red: true,
            dangerous_after_frames: 5,
            dangerous_distance_m: 3.0,
            long_horizon_speed_kmh: 80.0,
            short_horizon_frames: 40,
            long_horizon_frames: 60,
            planned_lane_lookahead_m: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyBox {
    pub bbox: Obb2d,
    pub length: f64,
}

/// The box ahead of the front bumper, aligned with the ego and as wide as it.
pub fn safety_box(ego: &EgoState) -> SafetyBox {
    let length = safety_distance(ego.speed_kmh()).expect("ego speed is never negative");
    let center = ego.pose.to_world([ego.half_length + 0.5 * length, 0.0]);
    SafetyBox {
        bbox: Obb2d {
            center: crate::world::Pose2D { x: center[0], y: center[1], yaw: ego.pose.yaw },
            half_length: 0.5 * length,
            half_width: ego.half_width,
        },
        length,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LightStopHazard {
    /// Id of the red (or yellow) light volume hit by the safety box.
    pub light: Option<String>,
    /// Id of the unserved stop sign volume hit by the safety box.
    pub stop: Option<String>,
}

/// Light and stop-sign hazards. `volumes` carry their current light state;
/// only volumes affecting one of `planned_lanes` are considered.
pub fn check_light_stop_hazard(
    safety: &SafetyBox,
    volumes: &[TriggerVolume],
    planned_lanes: &BTreeSet<LaneRef>,
    served_stops: &BTreeSet<String>,
    cfg: &HazardConfig,
) -> LightStopHazard {
    let mut out = LightStopHazard::default();
    for v in volumes.iter().filter(|v| v.affects_any(planned_lanes)) {
        let active = match v.kind {
            TriggerKind::TrafficLight => {
                v.light_state == LightState::Red || (cfg.yellow_is_red && v.light_state == LightState::Yellow)
            }
            TriggerKind::StopSign => !served_stops.contains(&v.id),
        };
        if !active || !obb_overlap(&safety.bbox, &v.bbox) {
            continue;
        }
        let slot = match v.kind {
            TriggerKind::TrafficLight => &mut out.light,
            TriggerKind::StopSign => &mut out.stop,
        };
        slot.get_or_insert_with(|| v.id.clone());
    }
    out
}

/// Consecutive-frame predicted-overlap counts per agent id.
pub type DangerCounts = BTreeMap<String, u32>;

/// Inputs for the ego's virtual rollout along its planned path.
#[derive(Debug, Clone, Copy)]
pub struct EgoRolloutContext<'a> {
    pub route: &'a DenseRoute,
    pub hint: Option<usize>,
    pub longitudinal: &'a PidController,
    pub lateral: &'a PidController,
    pub vehicle: &'a VehicleDynamics,
    pub bicycle: &'a BicycleParams,
    /// Held constant over the whole horizon.
    pub target_speed_kmh: f64,
}

pub fn collision_horizon(speed_kmh: f64, cfg: &HazardConfig) -> usize {
    if speed_kmh < cfg.long_horizon_speed_kmh {
        cfg.short_horizon_frames
    } else {
        cfg.long_horizon_frames
    }
}

/// Rolls the ego forward with copies of its controllers re-targeted to the
/// planned path every frame.
pub fn predict_ego_rollout(ego: &EgoState, ctx: &EgoRolloutContext<'_>, frames: usize) -> Rollout {
    let mut lon = ctx.longitudinal.clone();
    let mut lat = ctx.lateral.clone();
    let mut pose = ego.pose;
    let mut speed = ego.speed_mps();
    let mut hint = ctx.hint;
    let mut states = Vec::with_capacity(frames);
    for _ in 0..frames {
        let projection = ctx.route.project(pose.position(), hint);
        hint = Some(projection.segment);
        let kmh = speed * 3.6;
        let plan = plan_from_projection(pose, kmh, ctx.route, projection);
        let (throttle, brake) = longitudinal_control(kmh, ctx.target_speed_kmh, &mut lon);
        let steer = lateral_control(plan.local[0], &mut lat).unwrap_or(0.0);
        let (accel, wheel) = ctx.vehicle.apply(&ControlCommand { throttle, brake, steer }, speed);
        (pose, speed) = advance(pose, speed, accel, wheel, AgentKind::Vehicle, ctx.bicycle);
        states.push((pose, speed));
    }
    Rollout::from_states(states, ego.half_length, ego.half_width)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentVerdict {
    pub id: String,
    /// First future frame (1-based) where the boxes overlap.
    pub overlap_frame: Option<usize>,
    /// First future frame (1-based) that counts as a collision, including
    /// the proximity rule for dangerous agents.
    pub hazard_frame: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionReport {
    pub hazard: bool,
    pub colliding_agent: Option<String>,
    /// 1-based future frame of the earliest predicted collision.
    pub first_collision_frame: Option<usize>,
    pub horizon: usize,
    pub verdicts: Vec<AgentVerdict>,
    /// Updated consecutive counts.
    pub counts: DangerCounts,
}

impl CollisionReport {
    pub fn dangerous_agents(&self, cfg: &HazardConfig) -> Vec<(String, u32)> {
        self.counts
            .iter()
            .filter(|(_, c)| **c > cfg.dangerous_after_frames)
            .map(|(id, c)| (id.clone(), *c))
            .collect()
    }
}

pub fn check_collision_hazard(
    ego: &EgoState,
    agents: &[AgentState],
    ctx: &EgoRolloutContext<'_>,
    prior: &DangerCounts,
    cfg: &HazardConfig,
) -> CollisionReport {
    check_collision_hazard_with(ego, agents, ctx, prior, cfg, Parallelism::default())
}

/// Agents are rolled out in parallel when `mode` allows it and there are
/// enough of them to pay for the fork.
pub fn check_collision_hazard_with(
    ego: &EgoState,
    agents: &[AgentState],
    ctx: &EgoRolloutContext<'_>,
    prior: &DangerCounts,
    cfg: &HazardConfig,
    mode: Parallelism,
) -> CollisionReport {
    const PARALLEL_MIN_AGENTS: usize = 8;
    let horizon = collision_horizon(ego.speed_kmh(), cfg);
    if agents.is_empty() {
        return CollisionReport {
            hazard: false,
            colliding_agent: None,
            first_collision_frame: None,
            horizon,
            verdicts: Vec::new(),
            counts: DangerCounts::new(),
        };
    }
    let ego_roll = predict_ego_rollout(ego, ctx, horizon);
    let mode = if agents.len() >= PARALLEL_MIN_AGENTS { mode } else { Parallelism::Sequential };
    let verdicts = par::map(mode, agents, |agent| {
        let dangerous = prior.get(&agent.id).is_some_and(|c| *c > cfg.dangerous_after_frames);
        judge_agent(&ego_roll, agent, dangerous, ctx.bicycle, cfg)
    });
    let mut counts = DangerCounts::new();
    for v in &verdicts {
        if v.overlap_frame.is_some() {
            counts.insert(v.id.clone(), prior.get(&v.id).copied().unwrap_or(0) + 1);
        }
    }
    let first = verdicts
        .iter()
        .filter_map(|v| v.hazard_frame.map(|f| (f, v.id.as_str())))
        .min();
    CollisionReport {
        hazard: first.is_some(),
        colliding_agent: first.map(|(_, id)| id.to_string()),
        first_collision_frame: first.map(|(f, _)| f),
        horizon,
        verdicts,
        counts,
    }
}

fn judge_agent(
    ego_roll: &Rollout,
    agent: &AgentState,
    dangerous: bool,
    params: &BicycleParams,
    cfg: &HazardConfig,
) -> AgentVerdict {
    let roll = predict_agent_rollout(agent, ego_roll.len(), params).expect("horizon is non-zero");
    let mut overlap_frame = None;
    let mut hazard_frame = None;
    for (k, (e, a)) in ego_roll.boxes.iter().zip(&roll.boxes).enumerate() {
        if obb_overlap(e, a) {
            overlap_frame = Some(k + 1);
            hazard_frame.get_or_insert(k + 1);
            break;
        }
        if dangerous && hazard_frame.is_none() && obb_min_distance(e, a) < cfg.dangerous_distance_m {
            hazard_frame = Some(k + 1);
        }
    }
    AgentVerdict { id: agent.id.clone(), overlap_frame, hazard_frame }
}

/// Combined hazard verdicts for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardReport {
    pub light: Option<String>,
    pub stop: Option<String>,
    pub collision: CollisionReport,
}

impl HazardReport {
    pub fn light_hazard(&self) -> bool {
        self.light.is_some()
    }

    pub fn stop_hazard(&self) -> bool {
        self.stop.is_some()
    }

    pub fn collision_hazard(&self) -> bool {
        self.collision.hazard
    }
}
