//! Relation to the lead vehicle in the ego lane: a five-way decision chosen
//! by gap or time-to-collision, damped by hysteresis.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cot::{ahead_target_kmh, TargetSpeedTable};
use crate::waypoints::DenseRoute;
use crate::world::{mps_to_kmh, wrap_angle, AgentKind, AgentState, EgoState};

/// Ordered from most to least restrictive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AheadDecision {
    Brake,
    NearStaticApproach,
    SlowDown,
    FollowAhead,
    AimSpeedLimit,
}

impl AheadDecision {
    pub const ALL: [AheadDecision; 5] = [
        AheadDecision::Brake,
        AheadDecision::NearStaticApproach,
        AheadDecision::SlowDown,
        AheadDecision::FollowAhead,
        AheadDecision::AimSpeedLimit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AheadDecision::Brake => "Brake",
            AheadDecision::NearStaticApproach => "NearStaticApproach",
            AheadDecision::SlowDown => "SlowDown",
            AheadDecision::FollowAhead => "FollowAhead",
            AheadDecision::AimSpeedLimit => "AimSpeedLimit",
        }
    }

    /// Index into the cut-point intervals, or `None` for
    /// [`AheadDecision::NearStaticApproach`], which is not an interval.
    fn band_index(self) -> Option<usize> {
        match self {
            AheadDecision::Brake => Some(0),
            AheadDecision::SlowDown => Some(1),
            AheadDecision::FollowAhead => Some(2),
            AheadDecision::AimSpeedLimit => Some(3),
            AheadDecision::NearStaticApproach => None,
        }
    }

    fn from_band(i: usize) -> Self {
        [AheadDecision::Brake, AheadDecision::SlowDown, AheadDecision::FollowAhead, AheadDecision::AimSpeedLimit][i]
    }
}

impl fmt::Display for AheadDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AheadObservation {
    pub exists: bool,
    pub agent_id: Option<String>,
    /// Bumper-to-bumper gap along the route, meters.
    pub distance: f64,
    /// Ego speed minus lead speed, m/s; positive when closing.
    pub rel_speed: f64,
    /// Seconds; `+∞` when not closing.
    pub ttc: f64,
    /// m/s.
    pub ahead_speed: f64,
}

impl AheadObservation {
    pub fn none() -> Self {
        Self {
            exists: false,
            agent_id: None,
            distance: f64::INFINITY,
            rel_speed: 0.0,
            ttc: f64::INFINITY,
            ahead_speed: 0.0,
        }
    }

    pub fn new(agent_id: &str, distance: f64, ego_speed_mps: f64, ahead_speed_mps: f64) -> Self {
        let distance = distance.max(0.0);
        let rel_speed = ego_speed_mps - ahead_speed_mps;
        let ttc = if rel_speed > 0.0 { distance / rel_speed } else { f64::INFINITY };
        Self {
            exists: true,
            agent_id: Some(agent_id.to_string()),
            distance,
            rel_speed,
            ttc,
            ahead_speed: ahead_speed_mps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AheadConfig {
    /// Gap cut-points in meters: below `[0]` Brake, below `[1]` SlowDown,
    /// below `[2]` FollowAhead.
    pub distance_cuts: [f64; 3],
    /// Time-to-collision cut-points in seconds, same layout.
    pub ttc_cuts: [f64; 3],
    /// The gap selector is used below this gap unconditionally.
    pub selector_near_m: f64,
    /// ... or below this gap when `|rel_speed|` is under `selector_rel_speed`.
    pub selector_close_m: f64,
    pub selector_rel_speed: f64,
    /// Fraction of the previous decision's interval width added on each side.
    pub hysteresis_band: f64,
    /// NearStaticApproach applies when the decision target and the lead speed
    /// are both below this.
    pub near_static_kmh: f64,
    pub search_window_m: f64,
    /// Maximum lateral offset from the route of a same-lane vehicle.
    pub lane_half_width_m: f64,
}

impl Default for AheadConfig {
    fn default() -> Self {
        Self {
            distance_cuts: [4.0, 8.0, 14.0],
            ttc_cuts: [2.0, 4.0, 7.0],
            selector_near_m: 5.0,
            selector_close_m: 10.0,
            selector_rel_speed: 3.0,
            hysteresis_band: 0.2,
            near_static_kmh: 5.0,
            search_window_m: 100.0,
            lane_half_width_m: 1.75,
        }
    }
}

/// Hysteresis memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AheadState {
    pub previous: AheadDecision,
    /// The interval decision behind `previous` (differs only for
    /// NearStaticApproach).
    pub previous_interval: AheadDecision,
}

impl Default for AheadState {
    fn default() -> Self {
        Self { previous: AheadDecision::AimSpeedLimit, previous_interval: AheadDecision::AimSpeedLimit }
    }
}

/// Nearest vehicle ahead whose center lies within the ego lane and the
/// search window. `ego_s` is the ego's arc length on the route.
pub fn observe_ahead(
    ego: &EgoState,
    ego_s: f64,
    agents: &[AgentState],
    route: &DenseRoute,
    cfg: &AheadConfig,
) -> AheadObservation {
    let mut best: Option<(f64, &AgentState, f64)> = None;
    let reach = cfg.search_window_m + ego.half_length;
    for agent in agents.iter().filter(|a| a.kind == AgentKind::Vehicle) {
        let p = agent.pose.position();
        let dx = p[0] - ego.pose.x;
        let dy = p[1] - ego.pose.y;
        if dx * dx + dy * dy > (reach + agent.half_length).powi(2) {
            continue;
        }
        let proj = route.project_between(p, ego_s, ego_s + reach + agent.half_length);
        if proj.s <= ego_s || proj.lateral.abs() > cfg.lane_half_width_m {
            continue;
        }
        let gap = proj.s - ego_s - ego.half_length - agent.half_length;
        if gap > cfg.search_window_m {
            continue;
        }
        let closer = match best {
            Some((g, b, _)) => gap < g || (gap == g && agent.id < b.id),
            None => true,
        };
        if closer {
            best = Some((gap, agent, proj.s));
        }
    }
    match best {
        Some((gap, agent, s)) => {
            // Only the along-route component of the lead's motion counts.
            let heading = route.sample(s).heading;
            let along = (agent.speed * wrap_angle(agent.pose.yaw - heading).cos()).max(0.0);
            AheadObservation::new(&agent.id, gap, ego.speed_mps(), along)
        }
        None => AheadObservation::none(),
    }
}

fn classify(value: f64, cuts: &[f64; 3], previous: Option<usize>, band: f64) -> usize {
    if let Some(p) = previous {
        let lo = if p == 0 { f64::NEG_INFINITY } else { cuts[p - 1] };
        let hi = if p == 3 { f64::INFINITY } else { cuts[p] };
        let width = match p {
            0 => cuts[0],
            3 => cuts[2] - cuts[1],
            _ => cuts[p] - cuts[p - 1],
        };
        if value >= lo - band * width && value < hi + band * width {
            return p;
        }
    }
    cuts.iter().position(|c| value < *c).unwrap_or(3)
}

/// Uses the gap when it is small or the speeds are close, otherwise the
/// time-to-collision.
pub fn uses_distance_selector(obs: &AheadObservation, cfg: &AheadConfig) -> bool {
    obs.distance < cfg.selector_near_m
        || (obs.distance < cfg.selector_close_m && obs.rel_speed.abs() < cfg.selector_rel_speed)
}

pub fn ahead_decision(
    obs: &AheadObservation,
    state: AheadState,
    speed_limit_kmh: f64,
    table: &TargetSpeedTable,
    cfg: &AheadConfig,
) -> (AheadDecision, AheadState) {
    if !obs.exists {
        return (AheadDecision::AimSpeedLimit, AheadState::default());
    }
    let (value, cuts) = if uses_distance_selector(obs, cfg) {
        (obs.distance, &cfg.distance_cuts)
    } else {
        (obs.ttc, &cfg.ttc_cuts)
    };
    let interval =
        AheadDecision::from_band(classify(value, cuts, state.previous_interval.band_index(), cfg.hysteresis_band));
    let target = ahead_target_kmh(interval, obs.ahead_speed, speed_limit_kmh, table);
    let near_static = matches!(interval, AheadDecision::SlowDown | AheadDecision::FollowAhead)
        && target < cfg.near_static_kmh
        && mps_to_kmh(obs.ahead_speed) < cfg.near_static_kmh;
    let decision = if near_static { AheadDecision::NearStaticApproach } else { interval };
    (decision, AheadState { previous: decision, previous_interval: interval })
}
