//! Kinematic bicycle prediction and oriented-box geometry.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{AgentKind, AgentState, Obb2d, Point, Pose2D};

/// Simulation and control rate.
pub const FPS: u32 = 20;
pub const DT: f64 = 1.0 / FPS as f64;
/// Physical steering limit; keeps `tan(steer)` away from its pole.
pub const STEER_LIMIT: f64 = 1.22;

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("rollout horizon must be at least one frame")]
    EmptyHorizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BicycleParams {
    pub wheelbase: f64,
    pub max_steer: f64,
    pub dt: f64,
}

impl Default for BicycleParams {
    fn default() -> Self {
        Self { wheelbase: 2.9, max_steer: STEER_LIMIT, dt: DT }
    }
}

/// Advances a pose one `dt` under `(accel, steer)`.
///
/// Yaw rate uses the speed at the start of the step; the displacement is
/// taken along the mid-step heading, which keeps constant-steer motion on
/// its circle.
pub fn advance(
    pose: Pose2D,
    speed: f64,
    accel: f64,
    steer: f64,
    kind: AgentKind,
    params: &BicycleParams,
) -> (Pose2D, f64) {
    let dt = params.dt;
    let steer = match kind {
        AgentKind::Vehicle => steer.clamp(-params.max_steer.min(STEER_LIMIT), params.max_steer.min(STEER_LIMIT)),
        AgentKind::Pedestrian => 0.0,
    };
    let yaw_delta = speed / params.wheelbase * steer.tan() * dt;
    let heading = pose.yaw + 0.5 * yaw_delta;
    let step = speed * dt;
    let next = Pose2D::new(
        pose.x + step * heading.cos(),
        pose.y + step * heading.sin(),
        pose.yaw + yaw_delta,
    );
    (next, (speed + accel * dt).max(0.0))
}

pub fn bicycle_step(state: &AgentState, params: &BicycleParams) -> AgentState {
    let (pose, speed) = advance(state.pose, state.speed, state.accel, state.steer, state.kind, params);
    AgentState { pose, speed, ..state.clone() }
}

/// Predicted future states; entry `i` is the state `i + 1` frames ahead.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub states: Vec<(Pose2D, f64)>,
    pub boxes: Vec<Obb2d>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub(crate) fn from_states(states: Vec<(Pose2D, f64)>, half_length: f64, half_width: f64) -> Self {
        let boxes = states
            .iter()
            .map(|(pose, _)| Obb2d { center: *pose, half_length, half_width })
            .collect();
        Self { states, boxes }
    }
}

/// Rolls an agent forward with its current action held fixed. Pedestrians
/// keep their current velocity.
pub fn predict_agent_rollout(
    agent: &AgentState,
    frames: usize,
    params: &BicycleParams,
) -> Result<Rollout, KinematicsError> {
    if frames == 0 {
        return Err(KinematicsError::EmptyHorizon);
    }
    let accel = match agent.kind {
        AgentKind::Vehicle => agent.accel,
        AgentKind::Pedestrian => 0.0,
    };
    let mut pose = agent.pose;
    let mut speed = agent.speed;
    let mut states = Vec::with_capacity(frames);
    for _ in 0..frames {
        (pose, speed) = advance(pose, speed, accel, agent.steer, agent.kind, params);
        states.push((pose, speed));
    }
    Ok(Rollout::from_states(states, agent.half_length, agent.half_width))
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn radius_along(b: &Obb2d, axis: Point) -> f64 {
    let [f, l] = b.axes();
    b.half_length * dot(f, axis).abs() + b.half_width * dot(l, axis).abs()
}

/// Closed-set separating-axis test: touching boxes overlap.
pub fn obb_overlap(a: &Obb2d, b: &Obb2d) -> bool {
    let d = [b.center.x - a.center.x, b.center.y - a.center.y];
    let [af, al] = a.axes();
    let [bf, bl] = b.axes();
    [af, al, bf, bl]
        .into_iter()
        .all(|axis| dot(d, axis).abs() <= radius_along(a, axis) + radius_along(b, axis))
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = dot(ab, ab);
    let t = if len2 > 0.0 { (dot(ap, ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (ap[0] - t * ab[0]).hypot(ap[1] - t * ab[1])
}

/// Gap between two boxes; 0 when they overlap.
pub fn obb_min_distance(a: &Obb2d, b: &Obb2d) -> f64 {
    if obb_overlap(a, b) {
        return 0.0;
    }
    // Disjoint convex polygons: the closest pair involves a vertex of one.
    let ca = a.corners();
    let cb = b.corners();
    let mut best = f64::INFINITY;
    for (pts, edges) in [(&ca, &cb), (&cb, &ca)] {
        for &p in pts.iter() {
            for i in 0..4 {
                best = best.min(point_segment_distance(p, edges[i], edges[(i + 1) % 4]));
            }
        }
    }
    best
}
