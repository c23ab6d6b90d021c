//! Chain-of-thought resolution: hazards first, then the ahead vehicle, then
//! road structure.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ahead::{AheadDecision, AheadObservation};
use crate::world::mps_to_kmh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SpeedDecisionClass {
    SpeedLimit,
    FollowAhead,
    SlowDown,
    SlowApproach,
    CautiousTurn,
    Brake,
}

impl SpeedDecisionClass {
    pub const ALL: [SpeedDecisionClass; 6] = [
        SpeedDecisionClass::SpeedLimit,
        SpeedDecisionClass::FollowAhead,
        SpeedDecisionClass::SlowDown,
        SpeedDecisionClass::SlowApproach,
        SpeedDecisionClass::CautiousTurn,
        SpeedDecisionClass::Brake,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SpeedDecisionClass::SpeedLimit => "SpeedLimit",
            SpeedDecisionClass::FollowAhead => "FollowAhead",
            SpeedDecisionClass::SlowDown => "SlowDown",
            SpeedDecisionClass::SlowApproach => "SlowApproach",
            SpeedDecisionClass::CautiousTurn => "CautiousTurn",
            SpeedDecisionClass::Brake => "Brake",
        }
    }
}

impl fmt::Display for SpeedDecisionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-class target speeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TargetSpeedTable {
    /// SlowDown target as a fraction of the ahead vehicle's speed.
    pub slow_down_factor: f64,
    pub slow_approach_kmh: f64,
    /// Cap while turning inside a junction.
    pub cautious_turn_kmh: f64,
}

impl Default for TargetSpeedTable {
    fn default() -> Self {
        Self { slow_down_factor: 0.75, slow_approach_kmh: 10.0, cautious_turn_kmh: 30.0 }
    }
}

/// Ids and distances used only to phrase the reason.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HazardDetail {
    pub light: Option<String>,
    pub stop: Option<String>,
    pub agent: Option<String>,
    /// Current center distance to `agent`.
    pub agent_distance_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoTAspects {
    pub light_hazard: bool,
    pub stop_hazard: bool,
    pub collision_hazard: bool,
    pub is_junction: bool,
    pub nav_is_turn: bool,
    pub ahead: AheadObservation,
    pub ahead_decision: AheadDecision,
    pub speed_limit_kmh: f64,
    pub detail: HazardDetail,
}

impl CoTAspects {
    pub fn any_hazard(&self) -> bool {
        self.light_hazard || self.stop_hazard || self.collision_hazard
    }

    /// Classification labels, one per aspect, as `(aspect, label)`.
    pub fn labels(&self) -> [(&'static str, &'static str); 6] {
        let yn = |b: bool| if b { "yes" } else { "no" };
        [
            ("light_hazard", yn(self.light_hazard)),
            ("stop_hazard", yn(self.stop_hazard)),
            ("collision_hazard", yn(self.collision_hazard)),
            ("is_junction", yn(self.is_junction)),
            ("nav_is_turn", yn(self.nav_is_turn)),
            ("ahead", self.ahead_decision.as_str()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoTRecord {
    pub aspects: CoTAspects,
    pub final_decision: SpeedDecisionClass,
    pub target_speed_kmh: f64,
    pub reason: String,
}

/// Target speed implied by an ahead decision alone, before hazards and road
/// structure are considered.
pub fn ahead_target_kmh(
    decision: AheadDecision,
    ahead_speed_mps: f64,
    speed_limit_kmh: f64,
    table: &TargetSpeedTable,
) -> f64 {
    let ahead_kmh = mps_to_kmh(ahead_speed_mps.max(0.0));
    match decision {
        AheadDecision::Brake => 0.0,
        AheadDecision::NearStaticApproach => table.slow_approach_kmh,
        AheadDecision::SlowDown => table.slow_down_factor * ahead_kmh,
        AheadDecision::FollowAhead => ahead_kmh.min(speed_limit_kmh),
        AheadDecision::AimSpeedLimit => speed_limit_kmh,
    }
}

/// Resolves the final decision and target speed; the reason uses template 0.
pub fn resolve(aspects: &CoTAspects, table: &TargetSpeedTable) -> CoTRecord {
    resolve_seeded(aspects, table, 0)
}

pub fn resolve_seeded(aspects: &CoTAspects, table: &TargetSpeedTable, template_seed: u64) -> CoTRecord {
    let (final_decision, target) = decide(aspects, table);
    let mut record = CoTRecord {
        aspects: aspects.clone(),
        final_decision,
        target_speed_kmh: target,
        reason: String::new(),
    };
    record.reason = render_reason(&record, template_seed);
    record
}

fn decide(a: &CoTAspects, table: &TargetSpeedTable) -> (SpeedDecisionClass, f64) {
    use SpeedDecisionClass as C;
    if a.any_hazard() {
        return (C::Brake, 0.0);
    }
    let turning = a.is_junction && a.nav_is_turn;
    let target = ahead_target_kmh(a.ahead_decision, a.ahead.ahead_speed, a.speed_limit_kmh, table);
    let class = match a.ahead_decision {
        AheadDecision::Brake => return (C::Brake, 0.0),
        AheadDecision::NearStaticApproach => C::SlowApproach,
        AheadDecision::SlowDown => C::SlowDown,
        AheadDecision::FollowAhead => C::FollowAhead,
        AheadDecision::AimSpeedLimit if turning => C::CautiousTurn,
        AheadDecision::AimSpeedLimit => C::SpeedLimit,
    };
    let target = if turning { target.min(table.cautious_turn_kmh) } else { target };
    (class, target.max(0.0))
}

const RED_LIGHT: &[&str] = &[
    "The traffic light {light} ahead is red, so the ego vehicle brakes to a stop.",
    "The red light {light} controls the ego lane; the ego vehicle must stop before the line.",
    "Brake: traffic light {light} for our lane shows red.",
];
const STOP_SIGN: &[&str] = &[
    "There is a stop sign {stop} ahead, so the ego vehicle comes to a full stop.",
    "Stop sign {stop} governs the ego lane; stop before proceeding.",
    "Brake for the stop sign {stop} ahead.",
];
const COLLISION: &[&str] = &[
    "Potential collision with {agent} at {dist} m, so the ego vehicle brakes.",
    "The predicted paths of the ego vehicle and {agent} ({dist} m away) intersect; brake to avoid a collision.",
    "Brake: {agent} is {dist} m away and a collision is predicted.",
];
const AHEAD_BRAKE: &[&str] = &[
    "The vehicle ahead is only {gap} m away, so the ego vehicle brakes.",
    "Too close to the lead vehicle ({gap} m); brake.",
    "Brake to keep distance from the vehicle {gap} m ahead.",
];
const SLOW_APPROACH: &[&str] = &[
    "The vehicle ahead is nearly stopped {gap} m away; approach slowly at {target} km/h.",
    "Creep toward the near-static vehicle {gap} m ahead at {target} km/h.",
    "The lead vehicle barely moves; close the {gap} m gap at {target} km/h.",
];
const SLOW_DOWN: &[&str] = &[
    "The vehicle ahead at {gap} m is slower, so the ego vehicle slows down to {target} km/h.",
    "Closing in on the lead vehicle ({gap} m); slow down to {target} km/h.",
    "Reduce speed to {target} km/h because the vehicle {gap} m ahead is getting close.",
];
const FOLLOW: &[&str] = &[
    "Follow the vehicle {gap} m ahead at {target} km/h.",
    "Keep following the lead vehicle ({gap} m ahead) at {target} km/h.",
    "A vehicle is {gap} m ahead in the same lane; match its speed of {target} km/h.",
];
const CAUTIOUS_TURN: &[&str] = &[
    "The ego vehicle is turning in a junction, so it drives cautiously at {target} km/h.",
    "Turning at the intersection; limit speed to {target} km/h.",
    "Take the turn carefully at {target} km/h.",
];
const SPEED_LIMIT: &[&str] = &[
    "The road ahead is clear, so the ego vehicle drives at the speed limit of {limit} km/h.",
    "No hazards and no vehicle ahead; aim for the {limit} km/h speed limit.",
    "Clear lane: accelerate to the {limit} km/h limit.",
];

/// Deterministic reason text; `template_seed` picks the template.
pub fn render_reason(record: &CoTRecord, template_seed: u64) -> String {
    let a = &record.aspects;
    let pool = match record.final_decision {
        SpeedDecisionClass::Brake if a.light_hazard => RED_LIGHT,
        SpeedDecisionClass::Brake if a.stop_hazard => STOP_SIGN,
        SpeedDecisionClass::Brake if a.collision_hazard => COLLISION,
        SpeedDecisionClass::Brake => AHEAD_BRAKE,
        SpeedDecisionClass::SlowApproach => SLOW_APPROACH,
        SpeedDecisionClass::SlowDown => SLOW_DOWN,
        SpeedDecisionClass::FollowAhead => FOLLOW,
        SpeedDecisionClass::CautiousTurn => CAUTIOUS_TURN,
        SpeedDecisionClass::SpeedLimit => SPEED_LIMIT,
    };
    let template = pool[(template_seed % pool.len() as u64) as usize];
    template
        .replace("{light}", a.detail.light.as_deref().unwrap_or("(unnamed)"))
        .replace("{stop}", a.detail.stop.as_deref().unwrap_or("(unnamed)"))
        .replace("{agent}", a.detail.agent.as_deref().unwrap_or("an agent"))
        .replace("{dist}", &format!("{:.1}", a.detail.agent_distance_m.unwrap_or(0.0)))
        .replace("{gap}", &format!("{:.1}", a.ahead.distance))
        .replace("{target}", &format!("{:.1}", record.target_speed_kmh))
        .replace("{limit}", &format!("{:.1}", a.speed_limit_kmh))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn benign() -> CoTAspects {
        CoTAspects {
            light_hazard: false,
            stop_hazard: false,
            collision_hazard: false,
            is_junction: false,
            nav_is_turn: false,
            ahead: AheadObservation::none(),
            ahead_decision: AheadDecision::AimSpeedLimit,
            speed_limit_kmh: 60.0,
            detail: HazardDetail::default(),
        }
    }

    #[test]
    fn red_light_brakes() {
        let detail = HazardDetail { light: Some("tl_7".into()), ..HazardDetail::default() };
        let r = resolve(&CoTAspects { light_hazard: true, detail, ..benign() }, &TargetSpeedTable::default());
        assert_eq!((r.final_decision, r.target_speed_kmh), (SpeedDecisionClass::Brake, 0.0));
        for seed in 0..3 {
            let text = render_reason(&r, seed);
            assert!(text.contains("red") && text.contains("tl_7"), "{text}");
        }
    }

    #[test]
    fn junction_turn_is_cautious() {
        let r = resolve(&CoTAspects { is_junction: true, nav_is_turn: true, ..benign() }, &TargetSpeedTable::default());
        assert_eq!((r.final_decision, r.target_speed_kmh), (SpeedDecisionClass::CautiousTurn, 30.0));
        let slow = resolve(
            &CoTAspects { is_junction: true, nav_is_turn: true, speed_limit_kmh: 20.0, ..benign() },
            &TargetSpeedTable::default(),
        );
        assert_eq!(slow.target_speed_kmh, 20.0);
    }

    #[test]
    fn near_static_is_slow_approach() {
        let r = resolve(
            &CoTAspects { ahead_decision: AheadDecision::NearStaticApproach, ..benign() },
            &TargetSpeedTable::default(),
        );
        assert_eq!((r.final_decision, r.target_speed_kmh), (SpeedDecisionClass::SlowApproach, 10.0));
    }

    #[test]
    fn speed_limit_reason_has_limit() {
        let r = resolve(&benign(), &TargetSpeedTable::default());
        assert_eq!(r.final_decision, SpeedDecisionClass::SpeedLimit);
        for seed in 0..3 {
            assert!(render_reason(&r, seed).contains("60.0"));
        }
    }

    #[test]
    fn pedestrian_reason_golden() {
        let aspects = CoTAspects {
            collision_hazard: true,
            detail: HazardDetail {
                agent: Some("ped_0".into()),
                agent_distance_m: Some(12.345),
                ..HazardDetail::default()
            },
            ..benign()
        };
        let r = resolve(&aspects, &TargetSpeedTable::default());
        let text = render_reason(&r, 0);
        assert_eq!(text, "Potential collision with ped_0 at 12.3 m, so the ego vehicle brakes.");
        assert_eq!(text, render_reason(&r, 0));
        assert_ne!(render_reason(&r, 1), text);
        assert_eq!(render_reason(&r, 3), text);
    }

    #[test]
    fn follow_ahead_capped_by_limit() {
        let mut a = benign();
        a.ahead = AheadObservation::new("v", 20.0, 25.0, 22.0);
        a.ahead_decision = AheadDecision::FollowAhead;
        let r = resolve(&a, &TargetSpeedTable::default());
        assert_eq!(r.target_speed_kmh, 60.0);
        a.ahead = AheadObservation::new("v", 20.0, 12.0, 10.0);
        let r = resolve(&a, &TargetSpeedTable::default());
        assert!((r.target_speed_kmh - 36.0).abs() < 1e-9);
    }
}
