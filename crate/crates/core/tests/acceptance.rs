//! Acceptance gate: one `[PASS]`/`[FAIL]` line per criterion, nonzero exit
//! status if any criterion fails or exceeds its time budget.
//!
//! Every reference value here comes from an oracle written in this file
//! rather than from the library code under test.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, PI};
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cotdrive::ahead::{AheadDecision, AheadObservation};
use cotdrive::control::{lateral_control, PidController, PidGains, VehicleDynamics};
use cotdrive::cot::{resolve, CoTAspects, HazardDetail, SpeedDecisionClass, TargetSpeedTable};
use cotdrive::dataset::{compute_stats, make_splits, ScenarioMeta, Split, SplitRatios};
use cotdrive::hazards::{
    check_collision_hazard, predict_ego_rollout, safety_distance, DangerCounts, EgoRolloutContext, HazardConfig,
};
use cotdrive::kinematics::{advance, obb_overlap, BicycleParams};
use cotdrive::metrics::{evaluate_open_loop, f1_per_class, heading_accurate, parse_predictions, PredictionRecord};
use cotdrive::sim::{run_scenario, to_jsonl, Expert, FrameRecord};
use cotdrive::waypoints::{first_waypoint_distance, DenseRoute};
use cotdrive::world::{
    load_scenario, parse_scenario, AgentKind, AgentState, EgoState, Obb2d, Pose2D, RouteWaypoint, ScenarioSpec,
    ScenarioType, WaypointSemantic,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String, String>;

fn main() -> ExitCode {
    let criteria: [(&str, &str, u64, Check); 10] = [
        ("AC1", "safety distance formula", 1, ac1_safety_distance),
        ("AC2", "first waypoint distance sweep", 1, ac2_first_waypoint),
        ("AC3", "decision table and hazard dominance", 10, ac3_decision_table),
        ("AC4", "collision checker vs brute-force oracle", 60, ac4_collision_oracle),
        ("AC5", "OBB overlap vs rasterization oracle", 60, ac5_obb_oracle),
        ("AC6", "PID fixtures and closed-loop convergence", 30, ac6_pid),
        ("AC7", "determinism and frame-count law", 60, ac7_determinism),
        ("AC8", "expert safety on bundled scenarios", 120, ac8_safety),
        ("AC9", "evaluator self-consistency", 10, ac9_evaluator),
        ("AC10", "stratified scenario-atomic splits", 10, ac10_splits),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, budget_s, check) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > Duration::from_secs(budget_s) => {
                Err(format!("{detail}; exceeded {budget_s} s budget"))
            }
            other => other,
        };
        match outcome {
            Ok(detail) => println!("[PASS] {id} {name}: {detail} ({:.2} s)", elapsed.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {id} {name}: {detail} ({:.2} s)", elapsed.as_secs_f64());
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn bundled() -> Vec<ScenarioSpec> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(scenario_dir())
        .expect("scenario directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    files.iter().map(|f| load_scenario(f).expect("bundled scenario parses")).collect()
}

// ---------------------------------------------------------------- AC1

fn ac1_safety_distance() -> Result<String, String> {
    let at72 = safety_distance(72.0).map_err(|e| e.to_string())?;
    // 72 km/h = 20 m/s; 20² / 10 − 4 = 36.
    ensure(at72 == 36.0, || format!("safety_distance(72) = {at72}"))?;
    for i in 0..3000 {
        let v = i as f64 * 0.01;
        let d = safety_distance(v).map_err(|e| e.to_string())?;
        ensure(d == 3.0, || format!("safety_distance({v}) = {d}, expected 3"))?;
    }
    // Gap at the branch point: 3 − ((30/3.6)²/10 − 4) = 1/18.
    let above = safety_distance(30.0).map_err(|e| e.to_string())?;
    let below = safety_distance(30.0 - 1e-9).map_err(|e| e.to_string())?;
    let gap = (below - above).abs();
    ensure((gap - 1.0 / 18.0).abs() <= 1e-12, || format!("continuity gap {gap}, expected 1/18"))?;
    ensure(safety_distance(-1.0).is_err(), || "negative speed accepted".into())?;
    Ok(format!("d(72) = {at72}, gap at 30 km/h = {gap:.6}"))
}

// ---------------------------------------------------------------- AC2

fn ac2_first_waypoint() -> Result<String, String> {
    let mut n = 0;
    for i in 0..=1300 {
        let v = i as f64 / 10.0;
        let expected = if v < 20.0 { 4.0 } else { 0.5 * v / 3.6 + 2.0 };
        let got = first_waypoint_distance(v).map_err(|e| e.to_string())?;
        ensure((got - expected).abs() <= 1e-12, || format!("d_wpt({v}) = {got}, expected {expected}"))?;
        n += 1;
    }
    let just_below = first_waypoint_distance(20.0 - 1e-9).unwrap();
    let at = first_waypoint_distance(20.0).unwrap();
    ensure(just_below == 4.0, || format!("d_wpt(20-) = {just_below}"))?;
    ensure((at - (0.5 * 20.0 / 3.6 + 2.0)).abs() <= 1e-12, || format!("d_wpt(20) = {at}"))?;
    Ok(format!("{n} speeds, branch at 20 km/h: 4 -> {at:.4}"))
}

// ---------------------------------------------------------------- AC3

const AHEAD: [AheadDecision; 5] = [
    AheadDecision::AimSpeedLimit,
    AheadDecision::FollowAhead,
    AheadDecision::SlowDown,
    AheadDecision::NearStaticApproach,
    AheadDecision::Brake,
];

fn oracle_class(light: bool, stop: bool, collision: bool, junction: bool, turn: bool, ahead: AheadDecision) -> SpeedDecisionClass {
    use SpeedDecisionClass as C;
    if light || stop || collision {
        return C::Brake;
    }
    match ahead {
        AheadDecision::Brake => C::Brake,
        AheadDecision::NearStaticApproach => C::SlowApproach,
        AheadDecision::SlowDown => C::SlowDown,
        AheadDecision::FollowAhead => C::FollowAhead,
        AheadDecision::AimSpeedLimit if junction && turn => C::CautiousTurn,
        AheadDecision::AimSpeedLimit => C::SpeedLimit,
    }
}

fn aspects(bits: [bool; 5], ahead: AheadDecision, obs: AheadObservation, limit: f64) -> CoTAspects {
    CoTAspects {
        light_hazard: bits[0],
        stop_hazard: bits[1],
        collision_hazard: bits[2],
        is_junction: bits[3],
        nav_is_turn: bits[4],
        ahead: obs,
        ahead_decision: ahead,
        speed_limit_kmh: limit,
        detail: HazardDetail::default(),
    }
}

fn ac3_decision_table() -> Result<String, String> {
    let table = TargetSpeedTable::default();
    let mut combos = 0;
    for mask in 0..32u32 {
        let bits = [0, 1, 2, 3, 4].map(|i| mask >> i & 1 == 1);
        for ahead in AHEAD {
            let obs = AheadObservation::new("lead", 20.0, 10.0, 8.0);
            let r = resolve(&aspects(bits, ahead, obs, 50.0), &table);
            let want = oracle_class(bits[0], bits[1], bits[2], bits[3], bits[4], ahead);
            ensure(r.final_decision == want, || format!("{bits:?} {ahead:?}: got {:?}, want {want:?}", r.final_decision))?;
            combos += 1;
        }
    }
    ensure(combos == 160, || format!("{combos} combinations"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(0xC07);
    let mut violations = 0;
    let mut hazardous = 0;
    for _ in 0..100_000 {
        let bits = [0; 5].map(|_| rng.random_bool(0.5));
        let ahead = AHEAD[rng.random_range(0..5)];
        let obs = if rng.random_bool(0.2) {
            AheadObservation::none()
        } else {
            AheadObservation::new("a", rng.random_range(0.0..100.0), rng.random_range(0.0..30.0), rng.random_range(0.0..30.0))
        };
        let r = resolve(&aspects(bits, ahead, obs, rng.random_range(10.0..130.0)), &table);
        if bits[0] || bits[1] || bits[2] {
            hazardous += 1;
            if r.final_decision != SpeedDecisionClass::Brake || r.target_speed_kmh != 0.0 {
                violations += 1;
            }
        }
    }
    ensure(violations == 0, || format!("{violations} hazard-dominance violations"))?;
    Ok(format!("160/160 combinations, 0 violations in 100000 vectors ({hazardous} with a hazard)"))
}

// ---------------------------------------------------------------- AC4

/// Corners of a box in counter-clockwise order, computed from scratch.
fn corners(x: f64, y: f64, yaw: f64, hl: f64, hw: f64) -> [[f64; 2]; 4] {
    let (s, c) = yaw.sin_cos();
    [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)].map(|(a, b)| [x + c * a - s * b, y + s * a + c * b])
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn inside_convex(poly: &[[f64; 2]; 4], p: [f64; 2]) -> bool {
    (0..4).all(|i| cross(poly[i], poly[(i + 1) % 4], p) >= 0.0)
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    (d1 * d2 <= 0.0) && (d3 * d4 <= 0.0)
}

/// Polygon intersection by edge crossings and containment.
fn polygons_intersect(p: &[[f64; 2]; 4], q: &[[f64; 2]; 4]) -> bool {
    for i in 0..4 {
        for j in 0..4 {
            if segments_cross(p[i], p[(i + 1) % 4], q[j], q[(j + 1) % 4]) {
                return true;
            }
        }
    }
    inside_convex(q, p[0]) || inside_convex(p, q[0])
}

fn point_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (vx, vy) = (b[0] - a[0], b[1] - a[1]);
    let t = (((p[0] - a[0]) * vx + (p[1] - a[1]) * vy) / (vx * vx + vy * vy)).clamp(0.0, 1.0);
    (p[0] - a[0] - t * vx).hypot(p[1] - a[1] - t * vy)
}

fn polygon_gap(p: &[[f64; 2]; 4], q: &[[f64; 2]; 4]) -> f64 {
    if polygons_intersect(p, q) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for i in 0..4 {
        for j in 0..4 {
            best = best.min(point_segment(p[i], q[j], q[(j + 1) % 4]));
            best = best.min(point_segment(q[j], p[i], p[(i + 1) % 4]));
        }
    }
    best
}

/// Agent future poses under the documented kinematic bicycle model.
fn oracle_agent_path(a: &AgentState, frames: usize) -> Vec<(f64, f64, f64)> {
    const DT: f64 = 0.05;
    const WHEELBASE: f64 = 2.9;
    let (mut x, mut y, mut yaw, mut v) = (a.pose.x, a.pose.y, a.pose.yaw, a.speed);
    let (accel, steer) = match a.kind {
        AgentKind::Vehicle => (a.accel, a.steer.clamp(-1.22, 1.22)),
        AgentKind::Pedestrian => (0.0, 0.0),
    };
    let mut out = Vec::with_capacity(frames);
    for _ in 0..frames {
        let dyaw = v / WHEELBASE * steer.tan() * DT;
        let mid = yaw + dyaw / 2.0;
        x += v * DT * mid.cos();
        y += v * DT * mid.sin();
        yaw += dyaw;
        v = (v + accel * DT).max(0.0);
        out.push((x, y, yaw));
    }
    out
}

fn random_route(rng: &mut ChaCha8Rng) -> Vec<RouteWaypoint> {
    let wp = |x: f64, y: f64| RouteWaypoint {
        position: [x, y],
        semantic: WaypointSemantic::Normal,
        lane_id: "1".into(),
        road_id: "r".into(),
        arc_length: 0.0,
    };
    if rng.random_bool(0.5) {
        vec![wp(0.0, 0.0), wp(300.0, 0.0)]
    } else {
        let r: f64 = rng.random_range(30.0..120.0);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let mut pts: Vec<RouteWaypoint> = (0..=36)
            .map(|k| {
                let th = k as f64 * 5f64.to_radians();
                wp(r * th.sin(), sign * (r - r * th.cos()))
            })
            .collect();
        let end = pts.last().unwrap().position;
        pts.push(wp(end[0], end[1] + sign * 200.0));
        pts
    }
}

fn ac4_collision_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA4);
    let cfg = HazardConfig { short_horizon_frames: 60, long_horizon_frames: 60, ..HazardConfig::default() };
    let lon = PidController::longitudinal();
    let lat = PidController::lateral();
    let vehicle = VehicleDynamics::default();
    let bicycle = BicycleParams::default();
    let (mut with_hazard, mut total_agents, mut dangerous_seen) = (0, 0, 0);
    for scene in 0..200 {
        let sparse = random_route(&mut rng);
        let route = DenseRoute::new(&sparse).map_err(|e| e.to_string())?;
        let ego = EgoState::new(Pose2D::new(0.0, 0.0, 0.0), rng.random_range(0.0..70.0) / 3.6, 2.45, 1.05);
        let ctx = EgoRolloutContext {
            route: &route,
            hint: None,
            longitudinal: &lon,
            lateral: &lat,
            vehicle: &vehicle,
            bicycle: &bicycle,
            target_speed_kmh: rng.random_range(10.0..60.0),
        };
        let n = rng.random_range(0..=5);
        let mut agents = Vec::new();
        let mut prior = DangerCounts::new();
        for i in 0..n {
            let s = rng.random_range(5.0..60.0);
            let sample = route.sample(s);
            let off = rng.random_range(-6.0..6.0);
            let (sh, ch) = sample.heading.sin_cos();
            let kind = if rng.random_bool(0.7) { AgentKind::Vehicle } else { AgentKind::Pedestrian };
            let (hl, hw, speed, accel, steer) = match kind {
                AgentKind::Vehicle => (
                    rng.random_range(1.8..2.6),
                    rng.random_range(0.8..1.05),
                    rng.random_range(0.0..12.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-0.5..0.5),
                ),
                AgentKind::Pedestrian => (0.25, 0.25, rng.random_range(0.0..2.0), 0.0, 0.0),
            };
            let id = format!("a{i}");
            if rng.random_bool(0.3) {
                prior.insert(id.clone(), rng.random_range(1..10));
            }
            agents.push(AgentState {
                id,
                kind,
                pose: Pose2D::new(sample.position[0] - sh * off, sample.position[1] + ch * off, rng.random_range(-PI..PI)),
                speed,
                steer,
                accel,
                half_length: hl,
                half_width: hw,
                lane_id: String::new(),
            });
        }
        total_agents += agents.len();

        let report = check_collision_hazard(&ego, &agents, &ctx, &prior, &cfg);
        ensure(report.horizon == 60, || format!("scene {scene}: horizon {}", report.horizon))?;

        // Oracle: frame-aligned pairwise overlap against the same ego rollout.
        let ego_roll = predict_ego_rollout(&ego, &ctx, 60);
        let ego_polys: Vec<_> =
            ego_roll.states.iter().map(|(p, _)| corners(p.x, p.y, p.yaw, ego.half_length, ego.half_width)).collect();
        let mut expected_first: Option<(usize, String)> = None;
        let mut expected_counts = DangerCounts::new();
        for (agent, verdict) in agents.iter().zip(&report.verdicts) {
            let dangerous = prior.get(&agent.id).is_some_and(|c| *c > 5);
            dangerous_seen += dangerous as usize;
            let path = oracle_agent_path(agent, 60);
            let mut overlap = None;
            let mut hazard = None;
            for (k, ((x, y, yaw), ep)) in path.iter().zip(&ego_polys).enumerate() {
                let ap = corners(*x, *y, *yaw, agent.half_length, agent.half_width);
                let hit = polygons_intersect(ep, &ap);
                if hit && overlap.is_none() {
                    overlap = Some(k + 1);
                }
                if hazard.is_none() && (hit || (dangerous && polygon_gap(ep, &ap) < 3.0)) {
                    hazard = Some(k + 1);
                }
            }
            ensure(verdict.id == agent.id, || format!("scene {scene}: verdict order"))?;
            ensure(verdict.overlap_frame == overlap && verdict.hazard_frame == hazard, || {
                format!(
                    "scene {scene} agent {}: checker ({:?}, {:?}) oracle ({overlap:?}, {hazard:?})",
                    agent.id, verdict.overlap_frame, verdict.hazard_frame
                )
            })?;
            if overlap.is_some() {
                expected_counts.insert(agent.id.clone(), prior.get(&agent.id).copied().unwrap_or(0) + 1);
            }
            if let Some(f) = hazard {
                let cand = (f, agent.id.clone());
                if expected_first.as_ref().is_none_or(|best| cand < *best) {
                    expected_first = Some(cand);
                }
            }
        }
        ensure(report.hazard == expected_first.is_some(), || format!("scene {scene}: hazard flag"))?;
        ensure(report.first_collision_frame == expected_first.as_ref().map(|f| f.0), || {
            format!("scene {scene}: first frame {:?} vs {:?}", report.first_collision_frame, expected_first)
        })?;
        ensure(report.colliding_agent == expected_first.as_ref().map(|f| f.1.clone()), || {
            format!("scene {scene}: colliding agent")
        })?;
        ensure(report.counts == expected_counts, || format!("scene {scene}: counts"))?;
        with_hazard += report.hazard as usize;
    }
    ensure(with_hazard >= 20, || format!("only {with_hazard} scenes with a hazard; oracle check too weak"))?;
    Ok(format!(
        "200 scenes, {total_agents} agents, {with_hazard} scenes with a predicted collision, {dangerous_seen} dangerous agents"
    ))
}

// ---------------------------------------------------------------- AC5

const RASTER: f64 = 1e-4;

#[derive(Clone, Copy, Debug)]
struct RawBox {
    x: f64,
    y: f64,
    yaw: f64,
    hl: f64,
    hw: f64,
}

impl RawBox {
    fn obb(&self) -> Obb2d {
        Obb2d::new(Pose2D::new(self.x, self.y, self.yaw), self.hl, self.hw).unwrap()
    }

    fn corners(&self) -> [[f64; 2]; 4] {
        corners(self.x, self.y, self.yaw, self.hl, self.hw)
    }

    /// Slack of `p` against the closed box: ≥ 0 inside, and a negative
    /// value −s means `p` is at least `s` outside.
    fn slack(&self, p: [f64; 2]) -> f64 {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dy) = (p[0] - self.x, p[1] - self.y);
        let lx = c * dx + s * dy;
        let ly = -s * dx + c * dy;
        (self.hl - lx.abs()).min(self.hw - ly.abs())
    }
}

/// Largest slack in `b` over boundary samples of `a` spaced [`RASTER`]
/// apart, restricted to `b`'s circumscribed circle. Stops early once a
/// sample is inside.
fn boundary_depth(a: &RawBox, b: &RawBox) -> f64 {
    let r = b.hl.hypot(b.hw) + 2.0 * RASTER;
    let pts = a.corners();
    let mut best = f64::NEG_INFINITY;
    for i in 0..4 {
        let (p0, p1) = (pts[i], pts[(i + 1) % 4]);
        let len = (p1[0] - p0[0]).hypot(p1[1] - p0[1]);
        let u = [(p1[0] - p0[0]) / len, (p1[1] - p0[1]) / len];
        let w = [b.x - p0[0], b.y - p0[1]];
        let t0 = w[0] * u[0] + w[1] * u[1];
        let perp2 = w[0] * w[0] + w[1] * w[1] - t0 * t0;
        if perp2 > r * r {
            continue;
        }
        let half = (r * r - perp2).max(0.0).sqrt();
        let (lo, hi) = ((t0 - half).max(0.0), (t0 + half).min(len));
        if lo > hi {
            continue;
        }
        let n = ((hi - lo) / RASTER).ceil() as usize;
        for k in 0..=n {
            let t = (lo + k as f64 * RASTER).min(hi);
            let slack = b.slack([p0[0] + t * u[0], p0[1] + t * u[1]]);
            if slack > best {
                best = slack;
                if best >= 0.0 {
                    return best;
                }
            }
        }
    }
    best
}

/// `Some(overlap)` when the sampled boundaries settle the question, `None`
/// when the boxes are within the raster resolution of touching.
fn raster_oracle(a: &RawBox, b: &RawBox) -> Option<bool> {
    let depth = boundary_depth(a, b).max(boundary_depth(b, a));
    if depth >= 0.0 {
        Some(true)
    } else if depth < -RASTER {
        // Every boundary point is more than half a sample spacing outside.
        Some(false)
    } else {
        None
    }
}

fn random_box(rng: &mut ChaCha8Rng, spread: f64) -> RawBox {
    let mut coord = || if spread > 0.0 { rng.random_range(-spread..spread) } else { 0.0 };
    let (x, y) = (coord(), coord());
    RawBox {
        x,
        y,
        yaw: rng.random_range(-PI..PI),
        hl: rng.random_range(0.2..2.5),
        hw: rng.random_range(0.2..1.5),
    }
}

/// Places `b` so that its support corner toward `a` sits `gap` outside one
/// of `a`'s faces (negative gap: inside).
fn near_touching(rng: &mut ChaCha8Rng, gap: f64) -> (RawBox, RawBox) {
    let a = random_box(rng, 3.0);
    let mut b = random_box(rng, 0.0);
    let (s, c) = a.yaw.sin_cos();
    let (fwd, left) = ([c, s], [-s, c]);
    let face = rng.random_range(0..4);
    let (n, t, en, et) = match face {
        0 => (fwd, left, a.hl, a.hw),
        1 => ([-fwd[0], -fwd[1]], left, a.hl, a.hw),
        2 => (left, fwd, a.hw, a.hl),
        _ => ([-left[0], -left[1]], fwd, a.hw, a.hl),
    };
    let along = rng.random_range(-0.8..0.8) * et;
    let target = [a.x + n[0] * (en + gap) + t[0] * along, a.y + n[1] * (en + gap) + t[1] * along];
    let support = b
        .corners()
        .into_iter()
        .min_by(|p, q| (p[0] * n[0] + p[1] * n[1]).total_cmp(&(q[0] * n[0] + q[1] * n[1])))
        .unwrap();
    b.x = target[0] - (support[0] - b.x);
    b.y = target[1] - (support[1] - b.y);
    (a, b)
}

fn ac5_obb_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0BB);
    let mut pairs = Vec::with_capacity(10_000);
    for _ in 0..5_000 {
        pairs.push((random_box(&mut rng, 4.0), random_box(&mut rng, 4.0), None));
    }
    for i in 0..5_000 {
        let gap = if i % 2 == 0 { 1e-3 } else { -1e-3 };
        let (a, b) = near_touching(&mut rng, gap);
        pairs.push((a, b, Some(gap < 0.0)));
    }
    let (mut overlaps, mut unresolved, mut disagreements) = (0, 0, Vec::new());
    for (i, (a, b, constructed)) in pairs.iter().enumerate() {
        let sat = obb_overlap(&a.obb(), &b.obb());
        ensure(sat == obb_overlap(&b.obb(), &a.obb()), || format!("pair {i}: asymmetric"))?;
        overlaps += sat as usize;
        match raster_oracle(a, b) {
            Some(o) if o != sat => disagreements.push(i),
            Some(_) => {}
            None => unresolved += 1,
        }
        if let Some(expected) = constructed {
            ensure(sat == *expected, || format!("pair {i}: near-touching case {a:?} {b:?} got {sat}"))?;
        }
    }
    ensure(disagreements.is_empty(), || {
        format!("{} disagreements beyond resolution, first pair {}", disagreements.len(), disagreements[0])
    })?;
    Ok(format!("10000 pairs ({overlaps} overlapping, 5000 near-touching at 1 mm), 0 disagreements, {unresolved} within 0.1 mm"))
}

// ---------------------------------------------------------------- AC6

fn ac6_pid() -> Result<String, String> {
    // Longitudinal: kp 0.3, ki 0.05 on a constant error of 10 km/h.
    let mut lon = PidController::longitudinal();
    for k in 0..30 {
        let raw = lon.step(10.0);
        ensure((raw - 3.5).abs() <= 1e-9, || format!("longitudinal step {k}: {raw}"))?;
    }
    // Lateral: (0.8 + 0.3) · π/4 on the first step.
    let mut lat = PidController::lateral();
    let steer = lateral_control([FRAC_PI_4.cos(), FRAC_PI_4.sin()], &mut lat).map_err(|e| e.to_string())?;
    ensure((steer - 1.1 * FRAC_PI_4).abs() <= 1e-9, || format!("lateral {steer}"))?;
    ensure((steer - 0.8639).abs() < 5e-5, || format!("lateral {steer} vs 0.8639"))?;
    ensure(PidGains::LONGITUDINAL.window == 20 && PidGains::LATERAL.window == 10, || "windows".into())?;

    let sparse = [0.0, 2000.0].map(|x| RouteWaypoint {
        position: [x, 0.0],
        semantic: WaypointSemantic::Normal,
        lane_id: "1".into(),
        road_id: "r".into(),
        arc_length: 0.0,
    });
    let route = DenseRoute::new(&sparse).map_err(|e| e.to_string())?;
    let bicycle = BicycleParams::default();
    let mut settle = Vec::new();
    for target in [30.0, 50.0, 80.0] {
        let mut expert = Expert::new(Default::default(), target);
        let mut ego = EgoState::new(Pose2D::new(0.0, 0.0, 0.0), 0.0, 2.45, 1.05);
        // Last frame (s) outside the 5 % band over a 30 s run.
        let mut last_out = 0.0;
        for frame in 0..600u64 {
            let t = frame as f64 * 0.05;
            if (ego.speed_kmh() - target).abs() > 0.05 * target {
                last_out = t;
            }
            let out = expert.step(&mut ego, &[], &[], &route, 0);
            let (pose, v) = advance(ego.pose, ego.speed_mps(), out.accel, out.wheel_angle, AgentKind::Vehicle, &bicycle);
            ego.pose = pose;
            ego.set_speed_mps(v);
        }
        let settled = last_out + 0.05;
        ensure(settled <= 10.0, || format!("{target} km/h settles at {settled:.2} s"))?;
        settle.push(format!("{target:.0} km/h in {settled:.2} s"));
    }
    Ok(format!("fixtures exact to 1e-9; settle within 5%: {}", settle.join(", ")))
}

// ---------------------------------------------------------------- AC7

const EMPTY_STRAIGHT: &str = r#"
scenario_id = "empty_straight"
scenario_type = "ahead_vehicle"
weather = "clear"
time_of_day = "noon"
speed_limit_kmh = 40.0
duration_cap_s = 20.0

[ego]
initial_speed_kmh = 0.0

[[route]]
x = 0.0
y = 0.0

[[route]]
x = 1000.0
y = 0.0
semantic = "target"
"#;

fn ac7_determinism() -> Result<String, String> {
    let empty = parse_scenario(EMPTY_STRAIGHT, "empty").map_err(|e| e.to_string())?;
    let run = run_scenario(&empty, 0).map_err(|e| e.to_string())?;
    ensure(run.sim_frames == 400 && run.frames.len() == 40, || {
        format!("empty route: {} frames, {} records", run.sim_frames, run.frames.len())
    })?;
    let mut lines = 0;
    let specs = bundled();
    for spec in &specs {
        let a = run_scenario(spec, 11).map_err(|e| e.to_string())?;
        let b = run_scenario(spec, 11).map_err(|e| e.to_string())?;
        let (ja, jb) = (a.to_jsonl(), b.to_jsonl());
        ensure(ja.as_bytes() == jb.as_bytes(), || format!("{}: logs differ", spec.scenario_id))?;
        ensure(a.sim_frames == 400 && a.frames.len() == 40, || {
            format!("{}: {} frames, {} records", spec.scenario_id, a.sim_frames, a.frames.len())
        })?;
        lines += a.frames.len();
    }
    Ok(format!("{} scenarios byte-identical ({lines} records); 20 s cap -> 400 frames / 40 records", specs.len()))
}

// ---------------------------------------------------------------- AC8

fn ac8_safety() -> Result<String, String> {
    let specs = bundled();
    ensure(specs.len() >= 5, || format!("only {} bundled scenarios", specs.len()))?;
    let mut light_brakes = 0;
    let mut collisions = 0;
    for spec in &specs {
        let run = run_scenario(spec, 0).map_err(|e| e.to_string())?;
        collisions += run.infractions.collisions();
        if spec.scenario_type == ScenarioType::SignalStop {
            let light = spec.trigger_volumes.first().map(|v| v.id.clone()).unwrap_or_default();
            light_brakes += run
                .frames
                .iter()
                .filter(|f| {
                    f.cot.final_decision == SpeedDecisionClass::Brake && f.cot.light_hazard && f.cot.reason.contains(&light)
                })
                .count();
        }
    }
    ensure(collisions == 0, || format!("{collisions} collision infractions"))?;
    ensure(light_brakes >= 1, || "no Brake frame naming the red light".into())?;
    Ok(format!("{} scenarios, 0 collisions, {light_brakes} red-light Brake frames", specs.len()))
}

// ---------------------------------------------------------------- AC9

fn ac9_evaluator() -> Result<String, String> {
    let mut gt: Vec<FrameRecord> = Vec::new();
    for spec in bundled() {
        gt.extend(run_scenario(&spec, 5).map_err(|e| e.to_string())?.frames);
    }
    let preds = parse_predictions(&to_jsonl(&gt)).map_err(|e| e.to_string())?;
    let report = evaluate_open_loop(&gt, &preds).map_err(|e| e.to_string())?;
    ensure(report.f1.values().all(|f| *f == 1.0), || format!("self F1 {:?}", report.f1))?;
    let present: std::collections::BTreeSet<_> = gt.iter().map(|f| f.cot.final_decision).collect();
    ensure(report.f1.keys().copied().collect::<std::collections::BTreeSet<_>>() == present, || "class set".into())?;
    ensure(report.path_accuracy.values().all(|a| *a == 100.0), || format!("self accuracy {:?}", report.path_accuracy))?;
    let from_records: Vec<PredictionRecord> = gt.iter().map(PredictionRecord::from).collect();
    ensure(evaluate_open_loop(&gt, &from_records).map_err(|e| e.to_string())? == report, || "record path".into())?;

    use SpeedDecisionClass as C;
    let f1 = f1_per_class(&[C::Brake, C::Brake, C::SpeedLimit], &[C::Brake, C::SpeedLimit, C::Brake])
        .map_err(|e| e.to_string())?;
    ensure(f1[&C::Brake] == 0.5, || format!("TP=FP=FN=1 gives {}", f1[&C::Brake]))?;

    let r = |d: f64| d.to_radians();
    ensure(heading_accurate(r(10.0), r(11.5)), || "10.0 vs 11.5".into())?;
    ensure(!heading_accurate(r(10.0), r(12.5)), || "10.0 vs 12.5".into())?;
    ensure(heading_accurate(r(179.5), r(-179.5)), || "179.5 vs -179.5".into())?;
    ensure(heading_accurate(r(-179.5), r(179.5)), || "-179.5 vs 179.5".into())?;
    ensure(!heading_accurate(r(0.0), r(180.0)), || "0 vs 180".into())?;
    Ok(format!("{} frames, {} classes at F1 1.0, path accuracy 100%; 0.5 fixture; 2° boundaries", gt.len(), report.f1.len()))
}

// ---------------------------------------------------------------- AC10

fn ac10_splits() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5E1);
    let types = [ScenarioType::SignalStop, ScenarioType::CrossingPedestrian];
    let metas: Vec<ScenarioMeta> = (0..1000)
        .map(|i| ScenarioMeta {
            scenario_id: format!("syn_{i:04}"),
            scenario_type: types[i % 2],
            weather: "clear".into(),
            time_of_day: "noon".into(),
            dominant_decision: SpeedDecisionClass::ALL[rng.random_range(0..6)],
        })
        .collect();
    let ratios = SplitRatios::default();
    let a = make_splits(&metas, ratios, 42).map_err(|e| e.to_string())?;
    ensure(a == make_splits(&metas, ratios, 42).map_err(|e| e.to_string())?, || "not deterministic".into())?;
    ensure(a != make_splits(&metas, ratios, 43).map_err(|e| e.to_string())?, || "seed ignored".into())?;

    let counts = a.counts();
    for (got, want) in counts.iter().zip([700usize, 150, 150]) {
        ensure(got.abs_diff(want) <= 1, || format!("split counts {counts:?}"))?;
    }
    ensure(a.splits.len() == 1000, || "every scenario assigned once".into())?;

    let mut worst: f64 = 0.0;
    for split in Split::ALL {
        let ids: Vec<&str> = a.ids(split).collect();
        let first = ids.iter().filter(|id| {
            let i: usize = id[4..].parse().unwrap();
            i.is_multiple_of(2)
        });
        let ratio = 100.0 * first.count() as f64 / ids.len() as f64;
        worst = worst.max((ratio - 50.0).abs());
    }
    ensure(worst <= 5.0, || format!("type ratio off by {worst:.2} points"))?;

    // Atomicity at frame level: every frame of a scenario lands in its split.
    let template = run_scenario(&parse_scenario(EMPTY_STRAIGHT, "empty").unwrap(), 0).unwrap().frames;
    let mut frames = Vec::new();
    for m in &metas {
        for f in template.iter().take(3) {
            let mut f = f.clone();
            f.scenario_id = m.scenario_id.clone();
            frames.push(f);
        }
    }
    let stats = compute_stats(&frames, Some(&a)).map_err(|e| e.to_string())?;
    let per: BTreeMap<Split, u64> = stats.per_split.iter().map(|(s, st)| (*s, st.frames)).collect();
    for (i, split) in Split::ALL.into_iter().enumerate() {
        ensure(per[&split] == 3 * counts[i] as u64, || format!("{split:?}: {} frames", per[&split]))?;
    }
    Ok(format!("counts {counts:?}, worst type-ratio deviation {worst:.2} points, deterministic per seed"))
}
