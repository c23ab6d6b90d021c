use cotdrive::ahead::{AheadDecision, AheadObservation};
use cotdrive::cot::{resolve, CoTAspects, HazardDetail, SpeedDecisionClass, TargetSpeedTable};
use cotdrive::metrics::{
    closed_loop_score, derive_final_from_aspects, evaluate_open_loop, f1_per_class, parse_predictions, path_accuracy,
    MetricsError, PathSample, PenaltyTable, PredictedAhead, PredictedCot, PredictionRecord,
};
use cotdrive::sim::{run_scenario, InfractionKind};
use cotdrive::waypoints::RouteType;
use cotdrive::world::load_scenario;
use proptest::prelude::*;

const AHEAD: [AheadDecision; 5] = [
    AheadDecision::AimSpeedLimit,
    AheadDecision::FollowAhead,
    AheadDecision::SlowDown,
    AheadDecision::NearStaticApproach,
    AheadDecision::Brake,
];

fn class() -> impl Strategy<Value = SpeedDecisionClass> {
    (0usize..6).prop_map(|i| SpeedDecisionClass::ALL[i])
}

fn route_type() -> impl Strategy<Value = RouteType> {
    (0usize..3).prop_map(|i| RouteType::ALL[i])
}

fn scenario_frames() -> Vec<cotdrive::sim::FrameRecord> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/sharp_turn.toml");
    run_scenario(&load_scenario(path).unwrap(), 0).unwrap().frames
}

#[test]
fn absent_class_is_omitted() {
    use SpeedDecisionClass as C;
    let f1 = f1_per_class(&[C::Brake, C::SpeedLimit], &[C::Brake, C::SpeedLimit]).unwrap();
    assert_eq!(f1.len(), 2);
    assert!(!f1.contains_key(&C::CautiousTurn));
}

#[test]
fn predictions_with_only_final_decision() {
    let gt = scenario_frames();
    let text: String = gt
        .iter()
        .map(|f| {
            let wp = f.waypoints.iter().map(|p| format!("[{},{}]", p[0], p[1])).collect::<Vec<_>>().join(",");
            format!(
                "{{\"scenario_id\":\"{}\",\"frame\":{},\"cot\":{{\"final_decision\":\"{}\"}},\"waypoints\":[{wp}]}}\n",
                f.scenario_id, f.frame, f.cot.final_decision
            )
        })
        .collect();
    let preds = parse_predictions(&text).unwrap();
    let report = evaluate_open_loop(&gt, &preds).unwrap();
    assert!(report.f1.values().all(|v| *v == 1.0));
    assert!(report.path_accuracy.contains_key(&RouteType::Turn));
}

#[test]
fn misaligned_predictions_rejected() {
    let gt = scenario_frames();
    let mut preds: Vec<PredictionRecord> = gt.iter().map(PredictionRecord::from).collect();
    let last = preds.pop().unwrap();
    assert!(matches!(evaluate_open_loop(&gt, &preds), Err(MetricsError::MissingPrediction(_))));
    preds.push(last.clone());
    preds.push(last);
    assert!(matches!(evaluate_open_loop(&gt, &preds), Err(MetricsError::DuplicateKey(_))));
    let mut preds: Vec<PredictionRecord> = gt.iter().map(PredictionRecord::from).collect();
    preds[0].frame = 99_999;
    assert!(matches!(evaluate_open_loop(&gt, &preds), Err(MetricsError::MissingPrediction(_))));
    let mut preds: Vec<PredictionRecord> = gt.iter().map(PredictionRecord::from).collect();
    preds[3].waypoints[0] = [0.0, 0.0];
    assert!(matches!(evaluate_open_loop(&gt, &preds), Err(MetricsError::ZeroWaypoint(_))));
}

#[test]
fn closed_loop_on_real_runs() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/signal_stop.toml");
    let run = run_scenario(&load_scenario(path).unwrap(), 0).unwrap();
    let mut summary = run.summary();
    let clean = closed_loop_score(&[summary.clone()], &PenaltyTable::default()).unwrap();
    assert!((clean.rc - 100.0 * run.completed_arc / run.total_arc).abs() < 1e-9);
    assert_eq!(clean.is, 1.0);
    summary.infractions.events.push(cotdrive::sim::InfractionEvent {
        frame: 3,
        kind: InfractionKind::CollisionPedestrian,
        agent_id: None,
    });
    let hit = closed_loop_score(&[summary], &PenaltyTable::default()).unwrap();
    assert_eq!(hit.is, 0.5);
    assert!((hit.ds - clean.ds * 0.5).abs() < 1e-9);
}

proptest! {
    #[test]
    fn derived_final_equals_resolve(mask in 0u32..32, a in 0usize..5) {
        let bits = [0, 1, 2, 3, 4].map(|i| mask >> i & 1 == 1);
        let aspects = CoTAspects {
            light_hazard: bits[0],
            stop_hazard: bits[1],
            collision_hazard: bits[2],
            is_junction: bits[3],
            nav_is_turn: bits[4],
            ahead: AheadObservation::new("x", 12.0, 9.0, 4.0),
            ahead_decision: AHEAD[a],
            speed_limit_kmh: 60.0,
            detail: HazardDetail::default(),
        };
        let pred = PredictedCot {
            light_hazard: Some(bits[0]),
            stop_hazard: Some(bits[1]),
            collision_hazard: Some(bits[2]),
            is_junction: Some(bits[3]),
            nav_is_turn: Some(bits[4]),
            ahead: Some(PredictedAhead { decision: Some(AHEAD[a]) }),
            final_decision: None,
        };
        prop_assert_eq!(derive_final_from_aspects(&pred).unwrap(), resolve(&aspects, &TargetSpeedTable::default()).final_decision);
    }

    #[test]
    fn f1_permutation_invariant(pairs in prop::collection::vec((class(), class()), 1..60), rot in 0usize..60) {
        let gt: Vec<_> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<_> = pairs.iter().map(|p| p.1).collect();
        let base = f1_per_class(&gt, &pred).unwrap();
        let k = rot % pairs.len();
        let mut g2 = gt.clone();
        let mut p2 = pred.clone();
        g2.rotate_left(k);
        p2.rotate_left(k);
        prop_assert_eq!(&base, &f1_per_class(&g2, &p2).unwrap());
        for v in base.values() {
            prop_assert!((0.0..=1.0).contains(v));
        }
    }

    #[test]
    fn f1_blind_to_relabeling_other_classes(pairs in prop::collection::vec((class(), class()), 1..60)) {
        use SpeedDecisionClass as C;
        // Swap two non-target classes consistently; Brake's score is unchanged.
        let swap = |c: C| match c {
            C::SpeedLimit => C::SlowDown,
            C::SlowDown => C::SpeedLimit,
            other => other,
        };
        let gt: Vec<_> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<_> = pairs.iter().map(|p| p.1).collect();
        let g2: Vec<_> = gt.iter().map(|c| swap(*c)).collect();
        let p2: Vec<_> = pred.iter().map(|c| swap(*c)).collect();
        let a = f1_per_class(&gt, &pred).unwrap();
        let b = f1_per_class(&g2, &p2).unwrap();
        prop_assert_eq!(a.get(&C::Brake), b.get(&C::Brake));
    }

    #[test]
    fn path_accuracy_rotation_invariant(
        samples in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, route_type()), 1..40),
        theta in -3.0f64..3.0,
    ) {
        let at = |a: f64| [5.0 * a.cos(), 5.0 * a.sin()];
        // Stay clear of the 2° boundary, where rotation rounding could flip a verdict.
        let base: Vec<PathSample> = samples
            .iter()
            .filter(|(g, p, _)| {
                let d = (p - g).to_degrees().abs();
                (d - 2.0).abs() > 1e-6
            })
            .map(|(g, p, rt)| PathSample { gt: at(*g), pred: at(g + (p - g) * 0.02), route_type: *rt })
            .collect();
        prop_assume!(!base.is_empty());
        let rotate = |q: [f64; 2]| {
            let (s, c) = theta.sin_cos();
            [c * q[0] - s * q[1], s * q[0] + c * q[1]]
        };
        let rotated: Vec<PathSample> = base.iter().map(|s| PathSample { gt: rotate(s.gt), pred: rotate(s.pred), ..*s }).collect();
        prop_assert_eq!(path_accuracy(&base).unwrap(), path_accuracy(&rotated).unwrap());
    }
}
