//! Scenario files.
//!
//! A scenario is a TOML document. Top-level keys:
//!
//! | key               | type                 | default             |
//! |-------------------|----------------------|---------------------|
//! | `scenario_id`     | string               | required            |
//! | `scenario_type`   | one of [`ScenarioType`] | required         |
//! | `weather`         | string               | `"clear"`           |
//! | `time_of_day`     | string               | `"day"`             |
//! | `speed_limit_kmh` | float > 0            | required            |
//! | `duration_cap_s`  | float > 0            | `20.0`              |
//! | `trigger_point`   | `[x, y]`             | first route point   |
//! | `ego`             | table                | see [`EgoSetup`]    |
//! | `route`           | array of tables (≥ 2)| required            |
//! | `agents`          | array of tables      | empty               |
//! | `trigger_volumes` | array of tables      | empty               |
//! | `policy`          | table                | built-in defaults   |
//!
//! `route` entries: `x, y, semantic (normal|junction|turn|lane_change|target),
//! lane_id, road_id`. The semantic of an entry governs the segment that
//! starts at it.
//!
//! `agents` entries: `id, kind (vehicle|pedestrian), x, y, yaw, speed_mps,
//! steer, accel, half_length, half_width, lane_id, behavior`, where
//! `behavior` is `{ type = "constant_action" }`,
//! `{ type = "waypoint_follow", path = [[x, y], ...], speed_mps }` or
//! `{ type = "triggered", trigger_distance, then = <behavior> }`.
//!
//! `trigger_volumes` entries: `id, kind (traffic_light|stop_sign), x, y, yaw,
//! half_length, half_width, affected_lanes = [{ road_id, lane_id }, ...],
//! light_state (red|yellow|green|none), schedule = [{ at_s, state }, ...]`.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    AgentKind, AgentState, LaneRef, LightState, Obb2d, Point, Pose2D, RouteWaypoint,
    TriggerKind, TriggerVolume, WaypointSemantic, WorldError, PEDESTRIAN_HALF_EXTENT,
};
use crate::config::PolicyConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioType {
    SignalStop,
    CrossingPedestrian,
    LaneMergeCutin,
    AheadVehicle,
    SharpTurn,
}

impl ScenarioType {
    pub const ALL: [ScenarioType; 5] = [
        ScenarioType::SignalStop,
        ScenarioType::CrossingPedestrian,
        ScenarioType::LaneMergeCutin,
        ScenarioType::AheadVehicle,
        ScenarioType::SharpTurn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioType::SignalStop => "signal_stop",
            ScenarioType::CrossingPedestrian => "crossing_pedestrian",
            ScenarioType::LaneMergeCutin => "lane_merge_cutin",
            ScenarioType::AheadVehicle => "ahead_vehicle",
            ScenarioType::SharpTurn => "sharp_turn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Behavior {
    /// Hold the initial (accel, steer).
    ConstantAction,
    /// Track a polyline at a cruise speed.
    WaypointFollow { path: Vec<Point>, speed_mps: f64 },
    /// Hold the initial action until the ego comes within `trigger_distance`
    /// meters, then switch to `then`.
    Triggered { trigger_distance: f64, then: Box<Behavior> },
}

impl Behavior {
    fn validate(&self, agent: &str) -> Result<(), WorldError> {
        match self {
            Behavior::ConstantAction => Ok(()),
            Behavior::WaypointFollow { path, speed_mps } => {
                if path.is_empty() {
                    return Err(invalid(format!("agent {agent}: waypoint_follow path is empty")));
                }
                if !(*speed_mps >= 0.0 && speed_mps.is_finite()) {
                    return Err(invalid(format!("agent {agent}: waypoint_follow speed_mps must be >= 0")));
                }
                Ok(())
            }
            Behavior::Triggered { trigger_distance, then } => {
                if !(*trigger_distance > 0.0 && trigger_distance.is_finite()) {
                    return Err(invalid(format!("agent {agent}: trigger_distance must be > 0")));
                }
                then.validate(agent)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentScript {
    pub initial: AgentState,
    pub behavior: Behavior,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightPhase {
    pub at_s: f64,
    pub state: LightState,
}

/// Initial ego configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EgoSetup {
    pub initial_speed_kmh: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl Default for EgoSetup {
    fn default() -> Self {
        Self { initial_speed_kmh: 0.0, half_length: 2.45, half_width: 1.05 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub scenario_id: String,
    pub scenario_type: ScenarioType,
    pub weather: String,
    pub time_of_day: String,
    pub speed_limit_kmh: f64,
    pub duration_cap_s: f64,
    pub trigger_point: Point,
    pub ego: EgoSetup,
    /// Sparse route; densify with [`crate::waypoints::densify_route`].
    pub route: Vec<RouteWaypoint>,
    pub agent_scripts: Vec<AgentScript>,
    pub trigger_volumes: Vec<TriggerVolume>,
    pub policy: Option<PolicyConfig>,
}

impl ScenarioSpec {
    pub fn policy_config(&self) -> PolicyConfig {
        self.policy.clone().unwrap_or_default()
    }

    pub fn route_lanes(&self) -> BTreeSet<LaneRef> {
        self.route.iter().map(RouteWaypoint::lane).collect()
    }

    /// Trigger-volume lane references that do not appear anywhere on the route.
    pub fn dangling_lane_refs(&self) -> Vec<(String, LaneRef)> {
        let lanes = self.route_lanes();
        self.trigger_volumes
            .iter()
            .flat_map(|v| {
                v.affected_lanes
                    .iter()
                    .filter(|l| !lanes.contains(*l))
                    .map(|l| (v.id.clone(), l.clone()))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if self.scenario_id.trim().is_empty() {
            return Err(invalid("scenario_id must not be empty"));
        }
        if self.route.len() < 2 {
            return Err(invalid(format!("route must have >= 2 waypoints, got {}", self.route.len())));
        }
        for w in self.route.windows(2) {
            if !(w[1].arc_length > w[0].arc_length) {
                return Err(invalid(format!(
                    "route arc_length must be strictly increasing (repeated point at {:?})",
                    w[1].position
                )));
            }
        }
        if !(self.duration_cap_s > 0.0 && self.duration_cap_s.is_finite()) {
            return Err(invalid(format!("duration_cap_s must be > 0, got {}", self.duration_cap_s)));
        }
        if !(self.speed_limit_kmh > 0.0 && self.speed_limit_kmh.is_finite()) {
            return Err(invalid(format!("speed_limit_kmh must be > 0, got {}", self.speed_limit_kmh)));
        }
        if !(self.ego.half_length > 0.0 && self.ego.half_width > 0.0) {
            return Err(invalid("ego extents must be positive"));
        }
        if !(self.ego.initial_speed_kmh >= 0.0) {
            return Err(invalid("ego initial_speed_kmh must be >= 0"));
        }
        if !self.trigger_point.iter().all(|c| c.is_finite()) {
            return Err(invalid("trigger_point must be finite"));
        }
        let mut ids = HashSet::new();
        for script in &self.agent_scripts {
            script.initial.validate()?;
            script.behavior.validate(&script.initial.id)?;
            if !ids.insert(script.initial.id.as_str()) {
                return Err(invalid(format!("duplicate agent id {}", script.initial.id)));
            }
        }
        let mut vol_ids = HashSet::new();
        for v in &self.trigger_volumes {
            let is_stop = v.kind == TriggerKind::StopSign;
            if is_stop != (v.light_state == LightState::None)
                || v.schedule.iter().any(|p| is_stop != (p.state == LightState::None))
            {
                return Err(invalid(format!(
                    "trigger volume {}: light_state must be none iff kind is stop_sign",
                    v.id
                )));
            }
            if !vol_ids.insert(v.id.as_str()) {
                return Err(invalid(format!("duplicate trigger volume id {}", v.id)));
            }
        }
        Ok(())
    }
}

fn invalid(msg: impl Into<String>) -> WorldError {
    WorldError::Invalid(msg.into())
}

// ---- file model -----------------------------------------------------------

fn default_weather() -> String {
    "clear".into()
}
fn default_time_of_day() -> String {
    "day".into()
}
fn default_duration() -> f64 {
    20.0
}
fn default_road() -> String {
    "0".into()
}
fn default_semantic() -> WaypointSemantic {
    WaypointSemantic::Normal
}
fn default_behavior() -> Behavior {
    Behavior::ConstantAction
}

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioFile {
    scenario_id: String,
    scenario_type: ScenarioType,
    #[serde(default = "default_weather")]
    weather: String,
    #[serde(default = "default_time_of_day")]
    time_of_day: String,
    speed_limit_kmh: f64,
    #[serde(default = "default_duration")]
    duration_cap_s: f64,
    #[serde(default)]
    trigger_point: Option<Point>,
    #[serde(default)]
    ego: EgoSetup,
    route: Vec<RouteEntry>,
    #[serde(default)]
    agents: Vec<AgentEntry>,
    #[serde(default)]
    trigger_volumes: Vec<VolumeEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    policy: Option<PolicyConfig>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RouteEntry {
    x: f64,
    y: f64,
    #[serde(default = "default_semantic")]
    semantic: WaypointSemantic,
    #[serde(default)]
    lane_id: String,
    #[serde(default = "default_road")]
    road_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct AgentEntry {
    id: String,
    kind: AgentKind,
    x: f64,
    y: f64,
    #[serde(default)]
    yaw: f64,
    #[serde(default)]
    speed_mps: f64,
    #[serde(default)]
    steer: f64,
    #[serde(default)]
    accel: f64,
    #[serde(default)]
    half_length: Option<f64>,
    #[serde(default)]
    half_width: Option<f64>,
    #[serde(default)]
    lane_id: String,
    #[serde(default = "default_behavior")]
    behavior: Behavior,
}

#[derive(Debug, Serialize, Deserialize)]
struct VolumeEntry {
    id: String,
    kind: TriggerKind,
    x: f64,
    y: f64,
    #[serde(default)]
    yaw: f64,
    half_length: f64,
    half_width: f64,
    #[serde(default)]
    affected_lanes: Vec<LaneRef>,
    light_state: LightState,
    #[serde(default)]
    schedule: Vec<LightPhase>,
}

impl ScenarioFile {
    fn into_spec(self) -> Result<ScenarioSpec, WorldError> {
        let mut route = Vec::with_capacity(self.route.len());
        let mut arc = 0.0;
        for (i, e) in self.route.into_iter().enumerate() {
            if i > 0 {
                let prev: &RouteWaypoint = &route[i - 1];
                arc += (e.x - prev.position[0]).hypot(e.y - prev.position[1]);
            }
            route.push(RouteWaypoint {
                position: [e.x, e.y],
                semantic: e.semantic,
                lane_id: e.lane_id,
                road_id: e.road_id,
                arc_length: arc,
            });
        }
        let trigger_point = match (self.trigger_point, route.first()) {
            (Some(p), _) => p,
            (None, Some(w)) => w.position,
            (None, None) => return Err(invalid("route must have >= 2 waypoints, got 0")),
        };
        let agent_scripts = self
            .agents
            .into_iter()
            .map(|a| {
                let default_extent = match a.kind {
                    AgentKind::Vehicle => (2.45, 1.05),
                    AgentKind::Pedestrian => (PEDESTRIAN_HALF_EXTENT, PEDESTRIAN_HALF_EXTENT),
                };
                AgentScript {
                    initial: AgentState {
                        id: a.id,
                        kind: a.kind,
                        pose: Pose2D::new(a.x, a.y, a.yaw),
                        speed: a.speed_mps,
                        steer: a.steer,
                        accel: a.accel,
                        half_length: a.half_length.unwrap_or(default_extent.0),
                        half_width: a.half_width.unwrap_or(default_extent.1),
                        lane_id: a.lane_id,
                    },
                    behavior: a.behavior,
                }
            })
            .collect();
        let trigger_volumes = self
            .trigger_volumes
            .into_iter()
            .map(|v| {
                let bbox = Obb2d::new(Pose2D::new(v.x, v.y, v.yaw), v.half_length, v.half_width)
                    .map_err(|e| invalid(format!("trigger volume {}: {e}", v.id)))?;
                Ok(TriggerVolume {
                    id: v.id,
                    kind: v.kind,
                    bbox,
                    affected_lanes: v.affected_lanes.into_iter().collect(),
                    light_state: v.light_state,
                    schedule: v.schedule,
                })
            })
            .collect::<Result<Vec<_>, WorldError>>()?;
        let spec = ScenarioSpec {
            scenario_id: self.scenario_id,
            scenario_type: self.scenario_type,
            weather: self.weather,
            time_of_day: self.time_of_day,
            speed_limit_kmh: self.speed_limit_kmh,
            duration_cap_s: self.duration_cap_s,
            trigger_point,
            ego: self.ego,
            route,
            agent_scripts,
            trigger_volumes,
            policy: self.policy,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn from_spec(spec: &ScenarioSpec) -> Self {
        ScenarioFile {
            scenario_id: spec.scenario_id.clone(),
            scenario_type: spec.scenario_type,
            weather: spec.weather.clone(),
            time_of_day: spec.time_of_day.clone(),
            speed_limit_kmh: spec.speed_limit_kmh,
            duration_cap_s: spec.duration_cap_s,
            trigger_point: Some(spec.trigger_point),
            ego: spec.ego.clone(),
            route: spec
                .route
                .iter()
                .map(|w| RouteEntry {
                    x: w.position[0],
                    y: w.position[1],
                    semantic: w.semantic,
                    lane_id: w.lane_id.clone(),
                    road_id: w.road_id.clone(),
                })
                .collect(),
            agents: spec
                .agent_scripts
                .iter()
                .map(|s| {
                    let a = &s.initial;
                    AgentEntry {
                        id: a.id.clone(),
                        kind: a.kind,
                        x: a.pose.x,
                        y: a.pose.y,
                        yaw: a.pose.yaw,
                        speed_mps: a.speed,
                        steer: a.steer,
                        accel: a.accel,
                        half_length: Some(a.half_length),
                        half_width: Some(a.half_width),
                        lane_id: a.lane_id.clone(),
                        behavior: s.behavior.clone(),
                    }
                })
                .collect(),
            trigger_volumes: spec
                .trigger_volumes
                .iter()
                .map(|v| VolumeEntry {
                    id: v.id.clone(),
                    kind: v.kind,
                    x: v.bbox.center.x,
                    y: v.bbox.center.y,
                    yaw: v.bbox.center.yaw,
                    half_length: v.bbox.half_length,
                    half_width: v.bbox.half_width,
                    affected_lanes: v.affected_lanes.iter().cloned().collect(),
                    light_state: v.light_state,
                    schedule: v.schedule.clone(),
                })
                .collect(),
            policy: spec.policy.clone(),
        }
    }
}

/// Parses and validates scenario text. `origin` names the source in errors.
pub fn parse_scenario(text: &str, origin: &str) -> Result<ScenarioSpec, WorldError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| WorldError::Parse {
        origin: origin.to_string(),
        message: e.to_string(),
    })?;
    file.into_spec()
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioSpec, WorldError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| WorldError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_scenario(&text, &path.display().to_string())
}

/// Canonical text form: every default filled in, fixed key order.
pub fn to_canonical_string(spec: &ScenarioSpec) -> String {
    toml::to_string(&ScenarioFile::from_spec(spec)).expect("scenario file model always serializes")
}
