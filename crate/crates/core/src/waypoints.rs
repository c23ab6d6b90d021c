//! Route densification and speed-dependent planned waypoints.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{
    wrap_angle, EgoState, LaneRef, NavCommand, Point, Pose2D, RouteWaypoint, WaypointSemantic,
};

/// Number of planned waypoints.
pub const PLANNED_WAYPOINTS: usize = 10;
/// Arc-length gap between dense and planned waypoints.
pub const WAYPOINT_GAP: f64 = 1.0;
/// How far ahead the navigation command looks for the next maneuver.
pub const NAV_LOOKAHEAD_M: f64 = 25.0;
/// Segments searched past the hint when projecting onto the route.
const PROJECTION_WINDOW: usize = 40;

#[derive(Debug, Error, PartialEq)]
pub enum WaypointError {
    #[error("route needs at least 2 waypoints, got {0}")]
    TooFewPoints(usize),
    #[error("route has zero length")]
    ZeroLength,
    #[error("speed must be >= 0 km/h, got {0}")]
    NegativeSpeed(f64),
}

/// Distance from the ego to the first planned waypoint, in meters.
pub fn first_waypoint_distance(speed_kmh: f64) -> Result<f64, WaypointError> {
    if !(speed_kmh >= 0.0) {
        return Err(WaypointError::NegativeSpeed(speed_kmh));
    }
    Ok(if speed_kmh < 20.0 { 4.0 } else { 0.5 * (speed_kmh / 3.6) + 2.0 })
}

fn lerp(a: Point, b: Point, t: f64) -> Point {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]
}

fn dist(a: Point, b: Point) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

/// Resamples a sparse route at 1 m arc-length steps. Each dense point takes
/// the semantic and lane of the sparse segment it falls on.
pub fn densify_route(sparse: &[RouteWaypoint]) -> Result<Vec<RouteWaypoint>, WaypointError> {
    if sparse.len() < 2 {
        return Err(WaypointError::TooFewPoints(sparse.len()));
    }
    let mut arcs = Vec::with_capacity(sparse.len());
    let mut acc = 0.0;
    arcs.push(0.0);
    for w in sparse.windows(2) {
        acc += dist(w[0].position, w[1].position);
        arcs.push(acc);
    }
    let total = acc;
    if !(total > 1e-9) {
        return Err(WaypointError::ZeroLength);
    }
    let count = (total + 1e-9).floor() as usize + 1;
    let mut dense = Vec::with_capacity(count);
    let mut seg = 0;
    for k in 0..count {
        let s = k as f64 * WAYPOINT_GAP;
        while seg + 2 < arcs.len() && s >= arcs[seg + 1] {
            seg += 1;
        }
        // Zero-length segments never govern a sample.
        while seg + 2 < arcs.len() && arcs[seg + 1] - arcs[seg] <= 0.0 {
            seg += 1;
        }
        let len = arcs[seg + 1] - arcs[seg];
        let t = if len > 0.0 { ((s - arcs[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        let governing = if s >= total - 1e-9 { sparse.last().unwrap() } else { &sparse[seg] };
        dense.push(RouteWaypoint {
            position: lerp(sparse[seg].position, sparse[seg + 1].position, t),
            semantic: governing.semantic,
            lane_id: governing.lane_id.clone(),
            road_id: governing.road_id.clone(),
            arc_length: s,
        });
    }
    Ok(dense)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteProjection {
    /// Index of the polyline segment the point projects onto.
    pub segment: usize,
    /// Arc length of the foot point (may exceed the route length past the end).
    pub s: f64,
    /// Signed lateral offset, positive to the left of travel.
    pub lateral: f64,
    pub foot: Point,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteSample {
    pub position: Point,
    pub heading: f64,
    pub extrapolated: bool,
}

/// A densified route with its polyline geometry.
#[derive(Debug, Clone)]
pub struct DenseRoute {
    sparse: Vec<RouteWaypoint>,
    dense: Vec<RouteWaypoint>,
    // Polyline vertices with arc lengths: the dense points plus the exact end.
    geom: Vec<(Point, f64)>,
    total: f64,
}

impl DenseRoute {
    pub fn new(sparse: &[RouteWaypoint]) -> Result<Self, WaypointError> {
        let dense = densify_route(sparse)?;
        let mut sparse = sparse.to_vec();
        let mut acc = 0.0;
        for i in 0..sparse.len() {
            if i > 0 {
                acc += dist(sparse[i - 1].position, sparse[i].position);
            }
            sparse[i].arc_length = acc;
        }
        let total = acc;
        let mut geom: Vec<(Point, f64)> = dense.iter().map(|w| (w.position, w.arc_length)).collect();
        let end = sparse.last().unwrap().position;
        if total - geom.last().unwrap().1 > 1e-9 {
            geom.push((end, total));
        }
        Ok(Self { sparse, dense, geom, total })
    }

    pub fn dense(&self) -> &[RouteWaypoint] {
        &self.dense
    }

    pub fn sparse(&self) -> &[RouteWaypoint] {
        &self.sparse
    }

    pub fn total_length(&self) -> f64 {
        self.total
    }

    fn segment_count(&self) -> usize {
        self.geom.len() - 1
    }

    /// Projects `p` onto the route. With a `hint` (the previous segment), only
    /// segments at or after the hint are searched, so progress never moves
    /// backward. Ties go to the earliest segment.
    pub fn project(&self, p: Point, hint: Option<usize>) -> RouteProjection {
        let n = self.segment_count();
        let (start, end) = match hint {
            Some(h) => {
                let h = h.min(n - 1);
                (h, (h + PROJECTION_WINDOW).min(n))
            }
            None => (0, n),
        };
        self.project_segments(p, start, end)
    }

    /// Projects `p` onto the part of the route between arc lengths `s0` and
    /// `s1` (rounded outward to whole segments).
    pub fn project_between(&self, p: Point, s0: f64, s1: f64) -> RouteProjection {
        let n = self.segment_count();
        let lo = ((s0 / WAYPOINT_GAP).floor().max(0.0) as usize).min(n - 1);
        let hi = ((s1 / WAYPOINT_GAP).ceil().max(0.0) as usize).clamp(lo + 1, n);
        self.project_segments(p, lo, hi)
    }

    fn project_segments(&self, p: Point, start: usize, end: usize) -> RouteProjection {
        let n = self.segment_count();
        let mut best: Option<(f64, RouteProjection)> = None;
        for i in start..end {
            let (a, sa) = self.geom[i];
            let (b, sb) = self.geom[i + 1];
            let ab = [b[0] - a[0], b[1] - a[1]];
            let len = sb - sa;
            let raw = ((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / (len * len);
            let lo = if i == 0 { f64::NEG_INFINITY } else { 0.0 };
            let hi = if i + 1 == n { f64::INFINITY } else { 1.0 };
            let t = raw.clamp(lo, hi);
            let foot = lerp(a, b, t);
            let d = dist(p, foot);
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                let cross = ab[0] * (p[1] - a[1]) - ab[1] * (p[0] - a[0]);
                let proj = RouteProjection { segment: i, s: sa + t * len, lateral: cross / len, foot };
                best = Some((d, proj));
            }
        }
        best.expect("route has at least one segment").1
    }

    /// Position and heading at arc length `s`, extrapolating past either end.
    pub fn sample(&self, s: f64) -> RouteSample {
        let n = self.segment_count();
        let i = match self.geom.binary_search_by(|(_, a)| a.total_cmp(&s)) {
            Ok(i) => i.min(n - 1),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 1),
        };
        let (a, sa) = self.geom[i];
        let (b, sb) = self.geom[i + 1];
        let t = (s - sa) / (sb - sa);
        RouteSample {
            position: lerp(a, b, t),
            heading: (b[1] - a[1]).atan2(b[0] - a[0]),
            extrapolated: s < 0.0 || s > self.total + 1e-9,
        }
    }

    /// The dense waypoint governing arc length `s`.
    pub fn waypoint_at(&self, s: f64) -> &RouteWaypoint {
        let idx = (s / WAYPOINT_GAP).floor().max(0.0) as usize;
        &self.dense[idx.min(self.dense.len() - 1)]
    }

    pub fn lanes_between(&self, s0: f64, s1: f64) -> BTreeSet<LaneRef> {
        let lo = (s0 / WAYPOINT_GAP).floor().max(0.0) as usize;
        let hi = ((s1 / WAYPOINT_GAP).ceil().max(0.0) as usize).min(self.dense.len() - 1);
        self.dense[lo.min(hi)..=hi].iter().map(RouteWaypoint::lane).collect()
    }

    pub fn is_junction(&self, s: f64) -> bool {
        matches!(self.waypoint_at(s).semantic, WaypointSemantic::Junction | WaypointSemantic::Turn)
    }

    /// Navigation command derived from the next maneuver within
    /// [`NAV_LOOKAHEAD_M`].
    pub fn nav_command(&self, s: f64) -> NavCommand {
        let start = (s / WAYPOINT_GAP).floor().max(0.0) as usize;
        let stop = (((s + NAV_LOOKAHEAD_M) / WAYPOINT_GAP).ceil() as usize).min(self.dense.len());
        let window = start.min(stop)..stop;
        let maneuver = self.dense[window.clone()]
            .iter()
            .position(|w| matches!(w.semantic, WaypointSemantic::Turn | WaypointSemantic::LaneChange));
        if let Some(offset) = maneuver {
            let first = start + offset;
            let kind = self.dense[first].semantic;
            let run = self.dense[first..].iter().take_while(|w| w.semantic == kind).count();
            // Compare the travel direction just before the maneuver with the
            // direction at its end.
            let s0 = self.dense[first].arc_length;
            let s1 = self.dense[first + run - 1].arc_length + 0.5 * WAYPOINT_GAP;
            let a = self.sample((s0 - 0.5 * WAYPOINT_GAP).max(0.0));
            let b = self.sample(s1);
            return match kind {
                WaypointSemantic::Turn => {
                    if wrap_angle(b.heading - a.heading) >= 0.0 {
                        NavCommand::TurnLeft
                    } else {
                        NavCommand::TurnRight
                    }
                }
                _ => {
                    let d = [b.position[0] - a.position[0], b.position[1] - a.position[1]];
                    let left = a.heading.cos() * d[1] - a.heading.sin() * d[0];
                    if left >= 0.0 {
                        NavCommand::LaneChangeLeft
                    } else {
                        NavCommand::LaneChangeRight
                    }
                }
            };
        }
        if self.dense[window].iter().any(|w| w.semantic == WaypointSemantic::Junction) {
            NavCommand::Straight
        } else {
            NavCommand::Follow
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RouteType {
    Straight,
    Turn,
    LaneChange,
}

impl RouteType {
    pub const ALL: [RouteType; 3] = [RouteType::Straight, RouteType::Turn, RouteType::LaneChange];
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPath {
    /// Waypoints in the ego frame (+x forward, +y left).
    pub local: [Point; PLANNED_WAYPOINTS],
    pub world: [Point; PLANNED_WAYPOINTS],
    pub arc_lengths: [f64; PLANNED_WAYPOINTS],
    pub first_point_distance: f64,
    /// Set when some waypoints lie past the route end (heading extrapolation).
    pub padded: bool,
    pub projection: RouteProjection,
    /// Next sparse route point beyond the first waypoint, in the ego frame.
    pub target_point: Point,
    pub route_type: RouteType,
}

/// Selects the ten planned waypoints: 1 m apart along the route, the first
/// one [`first_waypoint_distance`] ahead of the ego's route projection.
pub fn plan_waypoints(ego: &EgoState, route: &DenseRoute, hint: Option<usize>) -> PlannedPath {
    let projection = route.project(ego.pose.position(), hint);
    plan_from_projection(ego.pose, ego.speed_kmh(), route, projection)
}

pub(crate) fn plan_from_projection(
    pose: Pose2D,
    speed_kmh: f64,
    route: &DenseRoute,
    projection: RouteProjection,
) -> PlannedPath {
    let first = first_waypoint_distance(speed_kmh.max(0.0)).expect("non-negative speed");
    let mut local = [[0.0; 2]; PLANNED_WAYPOINTS];
    let mut world = [[0.0; 2]; PLANNED_WAYPOINTS];
    let mut arc_lengths = [0.0; PLANNED_WAYPOINTS];
    let mut padded = false;
    let mut counts = [0usize; 3];
    for k in 0..PLANNED_WAYPOINTS {
        let s = projection.s + first + k as f64 * WAYPOINT_GAP;
        let sample = route.sample(s);
        padded |= sample.extrapolated;
        world[k] = sample.position;
        local[k] = pose.to_local(sample.position);
        arc_lengths[k] = s;
        let kind = match route.waypoint_at(s).semantic {
            WaypointSemantic::Turn => RouteType::Turn,
            WaypointSemantic::LaneChange => RouteType::LaneChange,
            _ => RouteType::Straight,
        };
        counts[kind as usize] += 1;
    }
    // Majority vote; ties go to Turn, then LaneChange.
    let [straight, turn, lane_change] = counts;
    let route_type = if turn > 0 && turn >= lane_change && turn >= straight {
        RouteType::Turn
    } else if lane_change > 0 && lane_change >= straight {
        RouteType::LaneChange
    } else {
        RouteType::Straight
    };
    let beyond = projection.s + first;
    let target = route
        .sparse()
        .iter()
        .find(|w| w.arc_length > beyond)
        .unwrap_or_else(|| route.sparse().last().unwrap())
        .position;
    PlannedPath {
        local,
        world,
        arc_lengths,
        first_point_distance: first,
        padded,
        projection,
        target_point: pose.to_local(target),
        route_type,
    }
}
