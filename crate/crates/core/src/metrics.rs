//! Open-loop evaluation (per-class F1, first-waypoint path accuracy) and
//! closed-loop scoring (route completion, infraction score, driving score).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ahead::{AheadDecision, AheadObservation};
use crate::cot::{resolve, CoTAspects, HazardDetail, SpeedDecisionClass, TargetSpeedTable};
use crate::sim::{FrameRecord, InfractionKind, RunSummary};
use crate::waypoints::RouteType;
use crate::world::{wrap_angle, Point};

/// Largest first-waypoint heading error counted as accurate, in degrees.
pub const PATH_TOLERANCE_DEG: f64 = 2.0;
/// Slack on the tolerance so that values meant to sit on the boundary are
/// not lost to rounding in the angle arithmetic.
const ANGLE_EPS_DEG: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("nothing to evaluate")]
    Empty,
    #[error("ground truth has {gt} labels but prediction has {pred}")]
    LengthMismatch { gt: usize, pred: usize },
    #[error("duplicate record for {0}")]
    DuplicateKey(String),
    #[error("prediction missing for {0}")]
    MissingPrediction(String),
    #[error("prediction {0} has no ground truth")]
    UnexpectedPrediction(String),
    #[error("aspect {0} missing from prediction")]
    MissingAspect(&'static str),
    #[error("prediction {0} has neither a full set of aspects nor a final decision")]
    MissingDecision(String),
    #[error("record {0} has no waypoints")]
    MissingWaypoints(String),
    #[error("zero-length waypoint in {0}")]
    ZeroWaypoint(String),
}

/// Predicted aspects, all optional. Key names mirror a frame record's `cot`
/// block, so a ground-truth log also parses as a prediction.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictedCot {
    pub light_hazard: Option<bool>,
    pub stop_hazard: Option<bool>,
    pub collision_hazard: Option<bool>,
    pub is_junction: Option<bool>,
    pub nav_is_turn: Option<bool>,
    pub ahead: Option<PredictedAhead>,
    pub final_decision: Option<SpeedDecisionClass>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictedAhead {
    pub decision: Option<AheadDecision>,
}

/// One line of prediction JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub scenario_id: String,
    pub frame: u64,
    #[serde(default)]
    pub cot: PredictedCot,
    /// Predicted waypoints in the ego frame.
    #[serde(default)]
    pub waypoints: Vec<Point>,
}

impl PredictionRecord {
    pub fn key(&self) -> String {
        record_key(&self.scenario_id, self.frame)
    }

    /// Final decision derived from the predicted aspects when all are
    /// present, otherwise the predicted final decision.
    pub fn final_decision(&self) -> Result<SpeedDecisionClass, MetricsError> {
        match derive_final_from_aspects(&self.cot) {
            Ok(c) => Ok(c),
            Err(MetricsError::MissingAspect(_)) => {
                self.cot.final_decision.ok_or_else(|| MetricsError::MissingDecision(self.key()))
            }
            Err(e) => Err(e),
        }
    }
}

impl From<&FrameRecord> for PredictionRecord {
    fn from(f: &FrameRecord) -> Self {
        Self {
            scenario_id: f.scenario_id.clone(),
            frame: f.frame,
            cot: PredictedCot {
                light_hazard: Some(f.cot.light_hazard),
                stop_hazard: Some(f.cot.stop_hazard),
                collision_hazard: Some(f.cot.collision_hazard),
                is_junction: Some(f.cot.is_junction),
                nav_is_turn: Some(f.cot.nav_is_turn),
                ahead: Some(PredictedAhead { decision: Some(f.cot.ahead.decision) }),
                final_decision: Some(f.cot.final_decision),
            },
            waypoints: f.waypoints.clone(),
        }
    }
}

fn record_key(scenario_id: &str, frame: u64) -> String {
    format!("{scenario_id}#{frame}")
}

/// Parses prediction JSONL; blank lines are skipped and unknown keys ignored.
pub fn parse_predictions(text: &str) -> Result<Vec<PredictionRecord>, crate::sim::record::RecordParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| crate::sim::record::RecordParseError { line: i + 1, message: e.to_string() })
        })
        .collect()
}

/// Runs the decision table on predicted aspects. The final class does not
/// depend on speeds, so the observation and speed limit are placeholders.
pub fn derive_final_from_aspects(cot: &PredictedCot) -> Result<SpeedDecisionClass, MetricsError> {
    let need = |v: Option<bool>, name| v.ok_or(MetricsError::MissingAspect(name));
    let ahead_decision =
        cot.ahead.as_ref().and_then(|a| a.decision).ok_or(MetricsError::MissingAspect("ahead"))?;
    let aspects = CoTAspects {
        light_hazard: need(cot.light_hazard, "light_hazard")?,
        stop_hazard: need(cot.stop_hazard, "stop_hazard")?,
        collision_hazard: need(cot.collision_hazard, "collision_hazard")?,
        is_junction: need(cot.is_junction, "is_junction")?,
        nav_is_turn: need(cot.nav_is_turn, "nav_is_turn")?,
        ahead: AheadObservation::none(),
        ahead_decision,
        speed_limit_kmh: 0.0,
        detail: HazardDetail::default(),
    };
    Ok(resolve(&aspects, &TargetSpeedTable::default()).final_decision)
}

/// One-vs-rest F1 = 2TP / (2TP + FP + FN) for every class that occurs in
/// either sequence. Classes absent from both are omitted.
pub fn f1_per_class(
    gt: &[SpeedDecisionClass],
    pred: &[SpeedDecisionClass],
) -> Result<BTreeMap<SpeedDecisionClass, f64>, MetricsError> {
    if gt.len() != pred.len() {
        return Err(MetricsError::LengthMismatch { gt: gt.len(), pred: pred.len() });
    }
    if gt.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut out = BTreeMap::new();
    for class in SpeedDecisionClass::ALL {
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for (g, p) in gt.iter().zip(pred) {
            match (*g == class, *p == class) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        let denom = 2 * tp + fp + fn_;
        if denom > 0 {
            out.insert(class, 2.0 * tp as f64 / denom as f64);
        }
    }
    Ok(out)
}

/// Heading of a waypoint in the ego frame, in radians.
pub fn waypoint_angle(p: Point) -> Option<f64> {
    (p[0] != 0.0 || p[1] != 0.0).then(|| p[1].atan2(p[0]))
}

/// Whether two headings (radians) differ by at most the path tolerance,
/// measured the short way round.
pub fn heading_accurate(gt: f64, pred: f64) -> bool {
    wrap_angle(pred - gt).abs().to_degrees() <= PATH_TOLERANCE_DEG + ANGLE_EPS_DEG
}

/// One frame of path evaluation: first ground-truth and predicted waypoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub gt: Point,
    pub pred: Point,
    pub route_type: RouteType,
}

/// Percentage of accurate first waypoints per ground-truth route type.
/// Route types with no samples are omitted.
pub fn path_accuracy(samples: &[PathSample]) -> Result<BTreeMap<RouteType, f64>, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut tally: BTreeMap<RouteType, (u64, u64)> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        let (Some(g), Some(p)) = (waypoint_angle(s.gt), waypoint_angle(s.pred)) else {
            return Err(MetricsError::ZeroWaypoint(format!("sample {i}")));
        };
        let t = tally.entry(s.route_type).or_default();
        t.1 += 1;
        if heading_accurate(g, p) {
            t.0 += 1;
        }
    }
    Ok(tally.into_iter().map(|(k, (hit, n))| (k, 100.0 * hit as f64 / n as f64)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenLoopReport {
    pub frames: u64,
    pub f1: BTreeMap<SpeedDecisionClass, f64>,
    pub path_accuracy: BTreeMap<RouteType, f64>,
}

/// Matches predictions to ground-truth frames by `(scenario_id, frame)`; the
/// two key sets must be identical.
pub fn evaluate_open_loop(gt: &[FrameRecord], pred: &[PredictionRecord]) -> Result<OpenLoopReport, MetricsError> {
    if gt.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut by_key: BTreeMap<String, &PredictionRecord> = BTreeMap::new();
    for p in pred {
        if by_key.insert(p.key(), p).is_some() {
            return Err(MetricsError::DuplicateKey(p.key()));
        }
    }
    let mut seen = BTreeSet::new();
    let mut gt_labels = Vec::with_capacity(gt.len());
    let mut pred_labels = Vec::with_capacity(gt.len());
    let mut samples = Vec::with_capacity(gt.len());
    for g in gt {
        let key = record_key(&g.scenario_id, g.frame);
        if !seen.insert(key.clone()) {
            return Err(MetricsError::DuplicateKey(key));
        }
        let p = by_key.get(&key).ok_or_else(|| MetricsError::MissingPrediction(key.clone()))?;
        gt_labels.push(g.cot.final_decision);
        pred_labels.push(p.final_decision()?);
        let first = |w: &[Point]| w.first().copied().ok_or_else(|| MetricsError::MissingWaypoints(key.clone()));
        let sample = PathSample { gt: first(&g.waypoints)?, pred: first(&p.waypoints)?, route_type: g.route_type };
        if waypoint_angle(sample.gt).is_none() || waypoint_angle(sample.pred).is_none() {
            return Err(MetricsError::ZeroWaypoint(key));
        }
        samples.push(sample);
    }
    if let Some(extra) = by_key.keys().find(|k| !seen.contains(*k)) {
        return Err(MetricsError::UnexpectedPrediction(extra.clone()));
    }
    Ok(OpenLoopReport {
        frames: gt.len() as u64,
        f1: f1_per_class(&gt_labels, &pred_labels)?,
        path_accuracy: path_accuracy(&samples)?,
    })
}

/// Multiplicative penalty per infraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyTable {
    pub collision_pedestrian: f64,
    pub collision_vehicle: f64,
    pub red_light: f64,
    pub stop_sign: f64,
    pub route_deviation: f64,
}

impl Default for PenaltyTable {
    fn default() -> Self {
        Self { collision_pedestrian: 0.50, collision_vehicle: 0.60, red_light: 0.70, stop_sign: 0.80, route_deviation: 0.70 }
    }
}

impl PenaltyTable {
    pub fn penalty(&self, kind: InfractionKind) -> f64 {
        match kind {
            InfractionKind::CollisionPedestrian => self.collision_pedestrian,
            InfractionKind::CollisionVehicle => self.collision_vehicle,
            InfractionKind::RedLight => self.red_light,
            InfractionKind::StopSign => self.stop_sign,
            InfractionKind::RouteDeviation => self.route_deviation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteScore {
    pub scenario_id: String,
    /// Route completion, percent.
    pub rc: f64,
    /// Infraction score in `[0, 1]`.
    pub is: f64,
    /// Driving score, `rc · is`.
    pub ds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopReport {
    pub routes: Vec<RouteScore>,
    pub rc: f64,
    pub is: f64,
    pub ds: f64,
}

pub fn route_score(run: &RunSummary, penalties: &PenaltyTable) -> RouteScore {
    let rc = if run.total_arc_m > 0.0 { (100.0 * run.completed_arc_m / run.total_arc_m).clamp(0.0, 100.0) } else { 0.0 };
    let is = run.infractions.events.iter().map(|e| penalties.penalty(e.kind)).product::<f64>();
    RouteScore { scenario_id: run.scenario_id.clone(), rc, is, ds: rc * is }
}

/// Per-route scores and their arithmetic means.
pub fn closed_loop_score(runs: &[RunSummary], penalties: &PenaltyTable) -> Result<ClosedLoopReport, MetricsError> {
    if runs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let routes: Vec<RouteScore> = runs.iter().map(|r| route_score(r, penalties)).collect();
    let n = routes.len() as f64;
    let mean = |f: fn(&RouteScore) -> f64| routes.iter().map(f).sum::<f64>() / n;
    Ok(ClosedLoopReport { rc: mean(|r| r.rc), is: mean(|r| r.is), ds: mean(|r| r.ds), routes })
}

/// Everything the evaluator reports; sections not evaluated are omitted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub open_loop: Option<OpenLoopReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_loop: Option<ClosedLoopReport>,
}

impl MetricsReport {
    /// Pretty JSON with stable key order.
    pub fn to_text(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }
}
