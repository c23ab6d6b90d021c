//! The rule-based expert: hazards, ahead relation, chain-of-thought
//! resolution, waypoint planning and PID control for one frame.

use std::collections::BTreeSet;

use crate::ahead::{ahead_decision, observe_ahead, AheadState};
use crate::config::PolicyConfig;
use crate::control::{lateral_control, longitudinal_control, ControlCommand, PidController};
use crate::cot::{resolve_seeded, CoTAspects, CoTRecord, HazardDetail};
use crate::hazards::{
    check_collision_hazard_with, check_light_stop_hazard, safety_box, DangerCounts, EgoRolloutContext, HazardReport,
};
use crate::kinematics::DT;
use crate::par::Parallelism;
use crate::waypoints::{plan_from_projection, DenseRoute, PlannedPath, WAYPOINT_GAP};
use crate::world::{AgentState, EgoState, TriggerVolume, WaypointSemantic};

/// Ego speed below which a stop sign counts as obeyed.
pub const STOP_SERVED_MPS: f64 = 0.1;

/// Everything the expert produced for one frame.
#[derive(Debug, Clone)]
pub struct ExpertOutput {
    pub record: CoTRecord,
    pub hazards: HazardReport,
    pub plan: PlannedPath,
    pub command: ControlCommand,
    /// Longitudinal acceleration and wheel angle from the command.
    pub accel: f64,
    pub wheel_angle: f64,
}

/// Per-episode expert state.
#[derive(Debug, Clone)]
pub struct Expert {
    cfg: PolicyConfig,
    speed_limit_kmh: f64,
    longitudinal: PidController,
    lateral: PidController,
    ahead: AheadState,
    danger: DangerCounts,
    served_stops: BTreeSet<String>,
    hint: Option<usize>,
    parallelism: Parallelism,
}

impl Expert {
    pub fn new(cfg: PolicyConfig, speed_limit_kmh: f64) -> Self {
        Self {
            longitudinal: PidController::new(cfg.longitudinal, DT),
            lateral: PidController::new(cfg.lateral, DT),
            cfg,
            speed_limit_kmh,
            ahead: AheadState::default(),
            danger: DangerCounts::new(),
            served_stops: BTreeSet::new(),
            hint: None,
            parallelism: Parallelism::Sequential,
        }
    }

    /// Parallelism used for the per-agent collision rollouts.
    pub fn with_parallelism(mut self, mode: Parallelism) -> Self {
        self.parallelism = mode;
        self
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn served_stops(&self) -> &BTreeSet<String> {
        &self.served_stops
    }

    pub fn danger_counts(&self) -> &DangerCounts {
        &self.danger
    }

    /// Runs the policy on the current world state. `volumes` must carry the
    /// light states of this frame. `ego` has its lane ids and navigation
    /// command refreshed from the route.
    pub fn step(
        &mut self,
        ego: &mut EgoState,
        agents: &[AgentState],
        volumes: &[TriggerVolume],
        route: &DenseRoute,
        template_seed: u64,
    ) -> ExpertOutput {
        let cfg = &self.cfg;
        let projection = route.project(ego.pose.position(), self.hint);
        self.hint = Some(projection.segment);
        let s = projection.s;
        let here = route.waypoint_at(s.max(0.0));
        ego.lane_id = here.lane_id.clone();
        ego.road_id = here.road_id.clone();
        ego.nav_command = route.nav_command(s.max(0.0));

        let plan = plan_from_projection(ego.pose, ego.speed_kmh(), route, projection);

        // Light and stop-sign hazards on the current or upcoming lanes.
        let safety = safety_box(ego);
        let reach = s + ego.half_length + safety.length.max(cfg.hazards.planned_lane_lookahead_m);
        let planned_lanes = route.lanes_between(s.max(0.0), reach);
        let light_stop = check_light_stop_hazard(&safety, volumes, &planned_lanes, &self.served_stops, &cfg.hazards);
        if let Some(id) = &light_stop.stop {
            if ego.speed_mps() < STOP_SERVED_MPS {
                self.served_stops.insert(id.clone());
            }
        }

        let obs = observe_ahead(ego, s, agents, route, &cfg.ahead);
        let (decision, ahead_state) = ahead_decision(&obs, self.ahead, self.speed_limit_kmh, &cfg.speeds, &cfg.ahead);
        self.ahead = ahead_state;

        // Junction state covers the span of the planned waypoints, so the
        // turn speed cap applies before the turn begins.
        let is_junction = junction_within(route, s, plan.arc_lengths[plan.arc_lengths.len() - 1]);
        let mut aspects = CoTAspects {
            light_hazard: false,
            stop_hazard: false,
            collision_hazard: false,
            is_junction,
            nav_is_turn: ego.nav_command.is_turn(),
            ahead: obs,
            ahead_decision: decision,
            speed_limit_kmh: self.speed_limit_kmh,
            detail: HazardDetail::default(),
        };

        // The virtual rollout drives at the speed the policy would choose
        // without any hazard.
        let proceed = resolve_seeded(&aspects, &cfg.speeds, 0).target_speed_kmh;
        let ctx = EgoRolloutContext {
            route,
            hint: self.hint,
            longitudinal: &self.longitudinal,
            lateral: &self.lateral,
            vehicle: &cfg.vehicle,
            bicycle: &cfg.bicycle,
            target_speed_kmh: proceed,
        };
        let collision = check_collision_hazard_with(ego, agents, &ctx, &self.danger, &cfg.hazards, self.parallelism);
        self.danger = collision.counts.clone();

        aspects.light_hazard = light_stop.light.is_some();
        aspects.stop_hazard = light_stop.stop.is_some();
        aspects.collision_hazard = collision.hazard;
        aspects.detail = HazardDetail {
            light: light_stop.light.clone(),
            stop: light_stop.stop.clone(),
            agent: collision.colliding_agent.clone(),
            agent_distance_m: collision.colliding_agent.as_ref().and_then(|id| {
                agents.iter().find(|a| &a.id == id).map(|a| {
                    let p = a.pose.position();
                    (p[0] - ego.pose.x).hypot(p[1] - ego.pose.y)
                })
            }),
        };
        let record = resolve_seeded(&aspects, &cfg.speeds, template_seed);

        let (throttle, brake) = longitudinal_control(ego.speed_kmh(), record.target_speed_kmh, &mut self.longitudinal);
        let steer = lateral_control(plan.local[0], &mut self.lateral).unwrap_or(0.0);
        let command = ControlCommand { throttle, brake, steer };
        let (accel, wheel_angle) = cfg.vehicle.apply(&command, ego.speed_mps());
        ExpertOutput {
            record,
            hazards: HazardReport { light: light_stop.light, stop: light_stop.stop, collision },
            plan,
            command,
            accel,
            wheel_angle,
        }
    }
}

fn junction_within(route: &DenseRoute, s0: f64, s1: f64) -> bool {
    let mut s = s0.max(0.0);
    let end = s1.min(route.total_length());
    while s <= end {
        if matches!(route.waypoint_at(s).semantic, WaypointSemantic::Junction | WaypointSemantic::Turn) {
            return true;
        }
        s += WAYPOINT_GAP;
    }
    route.is_junction(s0.max(0.0))
}
