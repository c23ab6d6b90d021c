//! Infraction detection for closed-loop scoring.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::kinematics::obb_overlap;
use crate::world::{AgentKind, AgentState, EgoState, LaneRef, LightState, TriggerKind, TriggerVolume};

/// Collisions with the same agent closer together than this are merged.
pub const COLLISION_DEDUP_S: f64 = 2.0;
/// Lateral offset from the route that counts as leaving it.
pub const ROUTE_DEVIATION_M: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfractionKind {
    CollisionVehicle,
    CollisionPedestrian,
    RedLight,
    StopSign,
    RouteDeviation,
}

impl InfractionKind {
    pub const ALL: [InfractionKind; 5] = [
        InfractionKind::CollisionVehicle,
        InfractionKind::CollisionPedestrian,
        InfractionKind::RedLight,
        InfractionKind::StopSign,
        InfractionKind::RouteDeviation,
    ];

    pub fn is_collision(self) -> bool {
        matches!(self, InfractionKind::CollisionVehicle | InfractionKind::CollisionPedestrian)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfractionEvent {
    pub frame: u64,
    pub kind: InfractionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_id: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InfractionLog {
    pub events: Vec<InfractionEvent>,
}

impl InfractionLog {
    pub fn count(&self, kind: InfractionKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn collisions(&self) -> usize {
        self.events.iter().filter(|e| e.kind.is_collision()).count()
    }
}

/// Memory carried between frames by [`check_infractions`].
#[derive(Debug, Clone, Default)]
pub struct InfractionTracker {
    in_contact: BTreeSet<String>,
    last_collision_s: BTreeMap<String, f64>,
    /// Ego front position along each volume's axis on the previous frame.
    previous_front: BTreeMap<String, f64>,
    deviated: bool,
}

/// World facts needed for one infraction check.
#[derive(Debug, Clone, Copy)]
pub struct InfractionInput<'a> {
    pub frame: u64,
    pub time_s: f64,
    pub ego: &'a EgoState,
    pub agents: &'a [AgentState],
    /// Volumes with their light state at `time_s`.
    pub volumes: &'a [TriggerVolume],
    pub served_stops: &'a BTreeSet<String>,
    /// Signed lateral offset of the ego from the route.
    pub route_lateral: f64,
}

/// Appends the infractions of the current state to `log`.
///
/// Collisions fire on the first frame of contact, and at most once per agent
/// within [`COLLISION_DEDUP_S`]. A red light or unserved stop sign is run when
/// the ego front bumper passes the downstream face of its volume while inside
/// the volume's lateral extent. Route deviation is reported once per run.
pub fn check_infractions(input: &InfractionInput<'_>, tracker: &mut InfractionTracker, log: &mut InfractionLog) {
    let ego_box = input.ego.bounding_box();
    let mut contact = BTreeSet::new();
    for agent in input.agents {
        if !obb_overlap(&ego_box, &agent.bounding_box()) {
            continue;
        }
        contact.insert(agent.id.clone());
        if tracker.in_contact.contains(&agent.id) {
            continue;
        }
        let recent = tracker
            .last_collision_s
            .get(&agent.id)
            .is_some_and(|t| input.time_s - t < COLLISION_DEDUP_S);
        if recent {
            continue;
        }
        tracker.last_collision_s.insert(agent.id.clone(), input.time_s);
        let kind = match agent.kind {
            AgentKind::Vehicle => InfractionKind::CollisionVehicle,
            AgentKind::Pedestrian => InfractionKind::CollisionPedestrian,
        };
        log.events.push(InfractionEvent { frame: input.frame, kind, agent_id: Some(agent.id.clone()) });
    }
    tracker.in_contact = contact;

    let ego_lane = LaneRef { road_id: input.ego.road_id.clone(), lane_id: input.ego.lane_id.clone() };
    let front = input.ego.front_bumper();
    for v in input.volumes {
        let local = v.bbox.center.to_local(front);
        let was = tracker.previous_front.insert(v.id.clone(), local[0]);
        let crossed = was.is_some_and(|w| w <= v.bbox.half_length && local[0] > v.bbox.half_length);
        if !crossed || local[1].abs() > v.bbox.half_width || !v.affected_lanes.contains(&ego_lane) {
            continue;
        }
        let kind = match v.kind {
            TriggerKind::TrafficLight if v.light_state == LightState::Red => InfractionKind::RedLight,
            TriggerKind::StopSign if !input.served_stops.contains(&v.id) => InfractionKind::StopSign,
            _ => continue,
        };
        log.events.push(InfractionEvent { frame: input.frame, kind, agent_id: None });
    }

    if !tracker.deviated && input.route_lateral.abs() > ROUTE_DEVIATION_M {
        tracker.deviated = true;
        log.events.push(InfractionEvent { frame: input.frame, kind: InfractionKind::RouteDeviation, agent_id: None });
    }
}
