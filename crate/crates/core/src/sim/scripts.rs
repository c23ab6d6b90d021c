//! Scripted behaviour for non-ego agents.

use crate::kinematics::{bicycle_step, BicycleParams};
use crate::world::{AgentKind, AgentScript, AgentState, Behavior, EgoState, Point};

const PURSUIT_MIN_LOOKAHEAD: f64 = 3.0;
const PURSUIT_LOOKAHEAD_GAIN: f64 = 0.5;
const SPEED_GAIN: f64 = 1.5;
const ACCEL_RANGE: (f64, f64) = (-6.0, 3.0);
/// Planned deceleration toward the end of a path, m/s².
const STOP_DECEL: f64 = 3.0;
/// Distance at which a path end counts as reached.
const ARRIVAL_M: f64 = 0.3;

/// Mutable per-agent script state.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptRuntime {
    behavior: Behavior,
    /// Initial `(accel, steer)`, held by constant and not-yet-triggered
    /// behaviours.
    hold: (f64, f64),
    /// Index of the path segment being tracked.
    segment: usize,
    /// Frame on which a triggered behaviour switched, if it has.
    pub triggered_at: Option<u64>,
}

impl ScriptRuntime {
    pub fn new(script: &AgentScript) -> Self {
        Self {
            behavior: script.behavior.clone(),
            hold: (script.initial.accel, script.initial.steer),
            segment: 0,
            triggered_at: None,
        }
    }

    pub fn behavior(&self) -> &Behavior {
        &self.behavior
    }
}

/// Sets every agent's action for frame `frame` from its script. Triggered
/// behaviours switch on the first frame the ego center is within their
/// trigger distance, and the new behaviour acts on that same frame.
pub fn apply_scripts(
    agents: &mut [AgentState],
    runtimes: &mut [ScriptRuntime],
    ego: &EgoState,
    frame: u64,
    params: &BicycleParams,
) {
    for (agent, rt) in agents.iter_mut().zip(runtimes.iter_mut()) {
        while let Behavior::Triggered { trigger_distance, then } = &rt.behavior {
            let d = distance(agent.pose.position(), ego.pose.position());
            if d > *trigger_distance {
                break;
            }
            rt.behavior = (**then).clone();
            rt.segment = 0;
            rt.triggered_at = Some(frame);
        }
        let ScriptRuntime { behavior, hold, segment, .. } = rt;
        match behavior {
            Behavior::ConstantAction | Behavior::Triggered { .. } => {
                agent.accel = hold.0;
                agent.steer = if agent.kind == AgentKind::Pedestrian { 0.0 } else { hold.1 };
            }
            Behavior::WaypointFollow { path, speed_mps } => follow(agent, segment, path, *speed_mps, params),
        }
    }
}

/// Advances every agent one step under its current action.
pub fn advance_agents(agents: &mut [AgentState], params: &BicycleParams) {
    for agent in agents.iter_mut() {
        *agent = bicycle_step(agent, params);
    }
}

fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn follow(agent: &mut AgentState, segment: &mut usize, path: &[Point], speed: f64, params: &BicycleParams) {
    let pos = agent.pose.position();
    match agent.kind {
        AgentKind::Pedestrian => {
            // Walk point to point; stop at the last one.
            while *segment < path.len() && distance(pos, path[*segment]) <= ARRIVAL_M {
                *segment += 1;
            }
            agent.accel = 0.0;
            agent.steer = 0.0;
            match path.get(*segment) {
                Some(target) => {
                    agent.pose.yaw = (target[1] - pos[1]).atan2(target[0] - pos[0]);
                    // Do not overshoot the point within one step.
                    agent.speed = speed.min(distance(pos, *target) / params.dt);
                }
                None => agent.speed = 0.0,
            }
        }
        AgentKind::Vehicle => {
            // A single-point path is approached in a straight line.
            let poly: Vec<Point> = if path.len() >= 2 { path.to_vec() } else { vec![pos, path[0]] };
            let (target, remaining) = pursuit_target(&poly, segment, pos, PURSUIT_MIN_LOOKAHEAD.max(PURSUIT_LOOKAHEAD_GAIN * agent.speed));
            let local = agent.pose.to_local(target);
            let l2 = local[0] * local[0] + local[1] * local[1];
            agent.steer = if l2 > 1e-9 {
                (2.0 * params.wheelbase * local[1] / l2).atan().clamp(-params.max_steer, params.max_steer)
            } else {
                0.0
            };
            // Stop at the end of the path.
            let stop_speed = (2.0 * STOP_DECEL * remaining).sqrt();
            let v_ref = speed.min(stop_speed);
            agent.accel = (SPEED_GAIN * (v_ref - agent.speed)).clamp(ACCEL_RANGE.0, ACCEL_RANGE.1);
            if remaining <= ARRIVAL_M && agent.speed < 0.5 {
                agent.accel = -agent.speed / params.dt;
            }
        }
    }
}

/// Point `lookahead` meters along the polyline past the projection of `pos`,
/// plus the path length remaining after the projection. `segment` only moves
/// forward.
fn pursuit_target(poly: &[Point], segment: &mut usize, pos: Point, lookahead: f64) -> (Point, f64) {
    if poly.len() < 2 {
        return (poly[0], distance(pos, poly[0]));
    }
    let last = poly.len() - 2;
    // Advance while the next segment is at least as close.
    let foot_t = |i: usize| {
        let (a, b) = (poly[i], poly[i + 1]);
        let ab = [b[0] - a[0], b[1] - a[1]];
        let len2 = ab[0] * ab[0] + ab[1] * ab[1];
        let t = if len2 > 0.0 { ((pos[0] - a[0]) * ab[0] + (pos[1] - a[1]) * ab[1]) / len2 } else { 0.0 };
        t.clamp(0.0, 1.0)
    };
    let foot_dist = |i: usize| {
        let t = foot_t(i);
        let (a, b) = (poly[i], poly[i + 1]);
        distance(pos, [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])])
    };
    *segment = (*segment).min(last);
    while *segment < last && foot_dist(*segment + 1) <= foot_dist(*segment) {
        *segment += 1;
    }
    let t = foot_t(*segment);
    let (a, b) = (poly[*segment], poly[*segment + 1]);
    let mut cursor = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    let mut remaining_total = distance(cursor, b);
    for i in *segment + 1..=last {
        remaining_total += distance(poly[i], poly[i + 1]);
    }
    let mut left = lookahead;
    let mut i = *segment;
    loop {
        let end = poly[i + 1];
        let d = distance(cursor, end);
        if d >= left {
            let f = left / d;
            return ([cursor[0] + f * (end[0] - cursor[0]), cursor[1] + f * (end[1] - cursor[1])], remaining_total);
        }
        left -= d;
        cursor = end;
        if i == last {
            // Past the end: extend along the final segment.
            let (p, q) = (poly[last], poly[last + 1]);
            let len = distance(p, q).max(1e-12);
            return (
                [q[0] + left * (q[0] - p[0]) / len, q[1] + left * (q[1] - p[1]) / len],
                remaining_total,
            );
        }
        i += 1;
    }
}
