//! Domain types for the simulated world.
//!
//! Everything lives in a flat 2-D world frame (x east, y north, yaw
//! counter-clockwise from +x). Speeds are stored in m/s; km/h only appears at
//! formula boundaries and in serialized output.

mod scenario;

pub use scenario::{
    load_scenario, parse_scenario, to_canonical_string, AgentScript, Behavior, EgoSetup,
    LightPhase, ScenarioSpec, ScenarioType,
};

use std::collections::BTreeSet;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point or vector in the plane, `[x, y]` in meters.
pub type Point = [f64; 2];

pub const KMH_PER_MPS: f64 = 3.6;

pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh / KMH_PER_MPS
}

pub fn mps_to_kmh(mps: f64) -> f64 {
    mps * KMH_PER_MPS
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("angle is not finite: {0}")]
    NonFiniteAngle(f64),
    #[error("box half extents must be positive, got {half_length} x {half_width}")]
    DegenerateBox { half_length: f64, half_width: f64 },
    #[error("parse error in {origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("failed to read {path}: {message}")]
    Io { path: String, message: String },
}

/// Reduces an angle to `(-π, π]`.
///
/// Values within floating-point rounding of an odd multiple of π map to `+π`.
pub fn normalize_yaw(angle: f64) -> Result<f64, WorldError> {
    if !angle.is_finite() {
        return Err(WorldError::NonFiniteAngle(angle));
    }
    Ok(wrap_angle(angle))
}

/// Like [`normalize_yaw`] for angles already known to be finite.
pub fn wrap_angle(angle: f64) -> f64 {
    let snap = 4.0 * f64::EPSILON * angle.abs().max(1.0);
    let r = angle.rem_euclid(TAU);
    if r > PI + snap {
        r - TAU
    } else {
        r.min(PI)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2D {
    /// Builds a pose, wrapping `yaw` into `(-π, π]`.
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw: wrap_angle(yaw) }
    }

    pub fn position(&self) -> Point {
        [self.x, self.y]
    }

    pub fn heading(&self) -> Point {
        [self.yaw.cos(), self.yaw.sin()]
    }

    /// Expresses a world point in this pose's frame (+x forward, +y left).
    pub fn to_local(&self, p: Point) -> Point {
        let (s, c) = self.yaw.sin_cos();
        let dx = p[0] - self.x;
        let dy = p[1] - self.y;
        [c * dx + s * dy, -s * dx + c * dy]
    }

    pub fn to_world(&self, p: Point) -> Point {
        let (s, c) = self.yaw.sin_cos();
        [self.x + c * p[0] - s * p[1], self.y + s * p[0] + c * p[1]]
    }
}

/// An oriented rectangle. `half_length` runs along the heading of `center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obb2d {
    pub center: Pose2D,
    pub half_length: f64,
    pub half_width: f64,
}

impl Obb2d {
    pub fn new(center: Pose2D, half_length: f64, half_width: f64) -> Result<Self, WorldError> {
        if !(half_length > 0.0 && half_width > 0.0) {
            return Err(WorldError::DegenerateBox { half_length, half_width });
        }
        Ok(Self { center, half_length, half_width })
    }

    /// Unit axes: `[forward, left]`.
    pub fn axes(&self) -> [Point; 2] {
        let (s, c) = self.center.yaw.sin_cos();
        [[c, s], [-s, c]]
    }

    /// Corners in counter-clockwise order starting at front-left.
    pub fn corners(&self) -> [Point; 4] {
        let [f, l] = self.axes();
        let (cx, cy) = (self.center.x, self.center.y);
        let (hl, hw) = (self.half_length, self.half_width);
        let at = |a: f64, b: f64| [cx + f[0] * a + l[0] * b, cy + f[1] * a + l[1] * b];
        [at(hl, hw), at(-hl, hw), at(-hl, -hw), at(hl, -hw)]
    }

    /// Closed containment test.
    pub fn contains(&self, p: Point) -> bool {
        let [lx, ly] = self.center.to_local(p);
        lx.abs() <= self.half_length && ly.abs() <= self.half_width
    }

    /// Euclidean distance from `p` to the box (0 inside).
    pub fn distance_to_point(&self, p: Point) -> f64 {
        let [lx, ly] = self.center.to_local(p);
        let dx = (lx.abs() - self.half_length).max(0.0);
        let dy = (ly.abs() - self.half_width).max(0.0);
        dx.hypot(dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Vehicle,
    Pedestrian,
}

/// Pedestrian footprint is fixed at 0.5 m x 0.5 m.
pub const PEDESTRIAN_HALF_EXTENT: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: String,
    pub kind: AgentKind,
    pub pose: Pose2D,
    /// m/s, never negative.
    pub speed: f64,
    /// Front-wheel angle in radians. Always 0 for pedestrians.
    pub steer: f64,
    /// m/s².
    pub accel: f64,
    pub half_length: f64,
    pub half_width: f64,
    pub lane_id: String,
}

impl AgentState {
    pub fn bounding_box(&self) -> Obb2d {
        Obb2d { center: self.pose, half_length: self.half_length, half_width: self.half_width }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: String| Err(WorldError::Invalid(format!("agent {}: {m}", self.id)));
        if !(self.speed >= 0.0 && self.speed.is_finite()) {
            return bad(format!("speed must be >= 0, got {}", self.speed));
        }
        if !(self.half_length > 0.0 && self.half_width > 0.0) {
            return bad("extents must be positive".into());
        }
        if self.kind == AgentKind::Pedestrian && self.steer != 0.0 {
            return bad("pedestrians must have steer = 0".into());
        }
        if !(self.pose.x.is_finite() && self.pose.y.is_finite() && self.accel.is_finite()) {
            return bad("pose and accel must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NavCommand {
    Follow,
    TurnLeft,
    TurnRight,
    LaneChangeLeft,
    LaneChangeRight,
    Straight,
}

impl NavCommand {
    pub fn is_turn(self) -> bool {
        matches!(self, NavCommand::TurnLeft | NavCommand::TurnRight)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgoState {
    pub pose: Pose2D,
    speed_mps: f64,
    pub half_length: f64,
    pub half_width: f64,
    pub lane_id: String,
    pub road_id: String,
    pub nav_command: NavCommand,
}

impl EgoState {
    pub fn new(pose: Pose2D, speed_mps: f64, half_length: f64, half_width: f64) -> Self {
        Self {
            pose,
            speed_mps: speed_mps.max(0.0),
            half_length,
            half_width,
            lane_id: String::new(),
            road_id: String::new(),
            nav_command: NavCommand::Follow,
        }
    }

    pub fn speed_mps(&self) -> f64 {
        self.speed_mps
    }

    pub fn speed_kmh(&self) -> f64 {
        mps_to_kmh(self.speed_mps)
    }

    pub fn set_speed_mps(&mut self, v: f64) {
        self.speed_mps = v.max(0.0);
    }

    pub fn set_speed_kmh(&mut self, v: f64) {
        self.set_speed_mps(kmh_to_mps(v));
    }

    pub fn bounding_box(&self) -> Obb2d {
        Obb2d { center: self.pose, half_length: self.half_length, half_width: self.half_width }
    }

    pub fn front_bumper(&self) -> Point {
        self.pose.to_world([self.half_length, 0.0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaypointSemantic {
    Normal,
    Junction,
    Turn,
    LaneChange,
    Target,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteWaypoint {
    pub position: Point,
    pub semantic: WaypointSemantic,
    pub lane_id: String,
    pub road_id: String,
    /// Cumulative distance along the route polyline.
    pub arc_length: f64,
}

impl RouteWaypoint {
    pub fn lane(&self) -> LaneRef {
        LaneRef { road_id: self.road_id.clone(), lane_id: self.lane_id.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LaneRef {
    pub road_id: String,
    pub lane_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKind {
    TrafficLight,
    StopSign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightState {
    Red,
    Yellow,
    Green,
    None,
}

/// Trigger area of a traffic light or stop sign. The box heading points along
/// the controlled lane's travel direction; its downstream face is the stop line.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerVolume {
    pub id: String,
    pub kind: TriggerKind,
    pub bbox: Obb2d,
    pub affected_lanes: BTreeSet<LaneRef>,
    pub light_state: LightState,
    pub schedule: Vec<LightPhase>,
}

impl TriggerVolume {
    /// Light state at simulated time `t`; the last schedule entry with
    /// `at_s <= t` wins, otherwise the initial state.
    pub fn state_at(&self, t: f64) -> LightState {
        self.schedule
            .iter()
            .rfind(|p| p.at_s <= t)
            .map(|p| p.state)
            .unwrap_or(self.light_state)
    }

    pub fn affects_any(&self, lanes: &BTreeSet<LaneRef>) -> bool {
        self.affected_lanes.iter().any(|l| lanes.contains(l))
    }
}
