//! The logged per-frame sample and its JSONL encoding.

use serde::{Deserialize, Serialize};

use crate::ahead::AheadDecision;
use crate::cot::{CoTRecord, SpeedDecisionClass};
use crate::waypoints::{PlannedPath, RouteType};
use crate::world::{mps_to_kmh, AgentKind, AgentState, EgoState, NavCommand, Point};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoRecord {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub speed_kmh: f64,
    pub half_length: f64,
    pub half_width: f64,
    pub lane_id: String,
    pub road_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub id: String,
    pub kind: AgentKind,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub speed_mps: f64,
    pub half_length: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AheadRecord {
    pub exists: bool,
    pub agent_id: Option<String>,
    /// `null` when no lead vehicle exists.
    pub distance_m: Option<f64>,
    pub rel_speed_mps: Option<f64>,
    /// `null` when no lead exists or it is not being closed on.
    pub ttc_s: Option<f64>,
    pub ahead_speed_kmh: Option<f64>,
    pub decision: AheadDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotBlock {
    pub light_hazard: bool,
    pub stop_hazard: bool,
    pub collision_hazard: bool,
    pub is_junction: bool,
    pub nav_is_turn: bool,
    pub speed_limit_kmh: f64,
    pub ahead: AheadRecord,
    pub final_decision: SpeedDecisionClass,
    pub target_speed_kmh: f64,
    pub reason: String,
}

impl CotBlock {
    /// Same labels as [`crate::cot::CoTAspects::labels`], read back from a log.
    pub fn labels(&self) -> [(&'static str, &'static str); 6] {
        let yn = |b: bool| if b { "yes" } else { "no" };
        [
            ("light_hazard", yn(self.light_hazard)),
            ("stop_hazard", yn(self.stop_hazard)),
            ("collision_hazard", yn(self.collision_hazard)),
            ("is_junction", yn(self.is_junction)),
            ("nav_is_turn", yn(self.nav_is_turn)),
            ("ahead", self.ahead.decision.as_str()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub scenario_id: String,
    pub frame: u64,
    pub sim_time_s: f64,
    pub ego: EgoRecord,
    pub agents: Vec<AgentRecord>,
    pub cot: CotBlock,
    /// Planned waypoints in the ego frame.
    pub waypoints: Vec<Point>,
    pub target_point: Point,
    pub nav_command: NavCommand,
    pub route_type: RouteType,
}

impl FrameRecord {
    pub fn new(
        scenario_id: &str,
        frame: u64,
        sim_time_s: f64,
        ego: &EgoState,
        agents: &[AgentState],
        cot: &CoTRecord,
        plan: &PlannedPath,
    ) -> Self {
        let a = &cot.aspects;
        let obs = &a.ahead;
        let finite = |v: f64| v.is_finite().then_some(v);
        Self {
            scenario_id: scenario_id.to_string(),
            frame,
            sim_time_s,
            ego: EgoRecord {
                x: ego.pose.x,
                y: ego.pose.y,
                yaw: ego.pose.yaw,
                speed_kmh: ego.speed_kmh(),
                half_length: ego.half_length,
                half_width: ego.half_width,
                lane_id: ego.lane_id.clone(),
                road_id: ego.road_id.clone(),
            },
            agents: agents
                .iter()
                .map(|s| AgentRecord {
                    id: s.id.clone(),
                    kind: s.kind,
                    x: s.pose.x,
                    y: s.pose.y,
                    yaw: s.pose.yaw,
                    speed_mps: s.speed,
                    half_length: s.half_length,
                    half_width: s.half_width,
                })
                .collect(),
            cot: CotBlock {
                light_hazard: a.light_hazard,
                stop_hazard: a.stop_hazard,
                collision_hazard: a.collision_hazard,
                is_junction: a.is_junction,
                nav_is_turn: a.nav_is_turn,
                speed_limit_kmh: a.speed_limit_kmh,
                ahead: AheadRecord {
                    exists: obs.exists,
                    agent_id: obs.agent_id.clone(),
                    distance_m: obs.exists.then_some(obs.distance),
                    rel_speed_mps: obs.exists.then_some(obs.rel_speed),
                    ttc_s: if obs.exists { finite(obs.ttc) } else { None },
                    ahead_speed_kmh: obs.exists.then(|| mps_to_kmh(obs.ahead_speed)),
                    decision: a.ahead_decision,
                },
                final_decision: cot.final_decision,
                target_speed_kmh: cot.target_speed_kmh,
                reason: cot.reason.clone(),
            },
            waypoints: plan.local.to_vec(),
            target_point: plan.target_point,
            nav_command: ego.nav_command,
            route_type: plan.route_type,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("frame records always serialize")
    }
}

/// One JSON object per line, each terminated by `\n`.
pub fn to_jsonl(frames: &[FrameRecord]) -> String {
    let mut out = String::new();
    for f in frames {
        out.push_str(&f.to_json_line());
        out.push('\n');
    }
    out
}

#[derive(Debug, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct RecordParseError {
    pub line: usize,
    pub message: String,
}

/// Parses JSONL frame records; blank lines are skipped.
pub fn parse_jsonl(text: &str) -> Result<Vec<FrameRecord>, RecordParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| RecordParseError { line: i + 1, message: e.to_string() }))
        .collect()
}
