use pedloc_core::detection::{Detection, DetectionSource};
use pedloc_core::evalkit::{
    detections_to_grid, evaluate, evaluate_frame, iou, report, shared_tp_iou, truth_detections, BoxM,
};
use pedloc_core::grid::{CellVector, GridSpec};
use pedloc_core::gridnet::{decode, GridPrediction};
use pedloc_core::synth::GroundTruthGrid;
use proptest::prelude::*;

fn grid3() -> GridSpec {
    GridSpec {
        s: 3,
        width: 30,
        height: 30,
        extent_x: 3.0,
        extent_y: 3.0,
    }
}

fn det(cx: f64, cy: f64, w: f64, h: f64) -> Detection {
    Detection {
        cx,
        cy,
        w,
        h,
        confidence: 1.0,
        source: DetectionSource::Cluster,
    }
}

fn truth_with(cells: &[(usize, CellVector)]) -> GroundTruthGrid {
    let mut t = GroundTruthGrid::empty(grid3());
    for &(i, c) in cells {
        t.cells[i] = c;
    }
    t
}

#[test]
fn two_frame_report_matches_hand_computation() {
    let g = grid3();
    // frame A: truth in cells 0 and 4; prediction hits 0 exactly, misses 4, adds a false positive in 8
    let a_truth = truth_with(&[
        (0, CellVector::occupied(0.5, 0.5, 0.2, 0.2)),
        (4, CellVector::occupied(0.5, 0.5, 0.2, 0.2)),
    ]);
    let a_pred = vec![det(0.5, 0.5, 0.6, 0.6), det(2.5, 2.5, 0.5, 0.5)];
    // frame B: truth in cells 1 and 2; prediction hits both, the box in cell 1 shifted by half its width
    let b_truth = truth_with(&[
        (1, CellVector::occupied(0.5, 0.5, 0.2, 0.2)),
        (2, CellVector::occupied(0.5, 0.5, 0.2, 0.2)),
    ]);
    let b_pred = vec![det(1.8, 0.5, 0.6, 0.6), det(2.5, 0.5, 0.6, 0.6)];
    let r = evaluate(&[(a_pred, a_truth), (b_pred, b_truth)], &g, 0.5).unwrap();
    assert_eq!(r.buckets.len(), 1);
    let b = r.bucket(2).unwrap();
    assert_eq!(b.n_frames, 2);
    // per-frame precision 1/2 and 2/2, recall 1/2 and 2/2
    assert!((b.precision.unwrap() - 0.75).abs() < 1e-12);
    assert!((b.recall.unwrap() - 0.75).abs() < 1e-12);
    // IoUs over the three true positives: 1, 1/3, 1
    assert!((b.mean_iou.unwrap() - (1.0 + 1.0 / 3.0 + 1.0) / 3.0).abs() < 1e-6);
    assert_eq!((b.counts.tp, b.counts.fp, b.counts.fn_, b.counts.tn), (3, 1, 1, 13));
    assert!(r.to_csv().contains("\nall,2,0.750000,0.750000,0.777778\n"));
    let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    assert_eq!(json["buckets"][0]["counts"]["fn"], 1);
}

#[test]
fn undefined_precision_is_excluded() {
    let g = grid3();
    let t1 = truth_with(&[(3, CellVector::occupied(0.5, 0.5, 0.2, 0.2))]);
    let t2 = t1.clone();
    let frames = vec![(vec![], t1.clone()), (truth_detections(&t2), t2)];
    let r = evaluate(&frames, &g, 0.5).unwrap();
    let b = r.bucket(1).unwrap();
    // the empty prediction has no precision, so only the perfect frame counts
    assert_eq!(b.precision, Some(1.0));
    assert_eq!(b.recall, Some(0.5));
    let empty_truth = truth_with(&[]);
    let r = evaluate(&[(vec![], empty_truth)], &g, 0.5).unwrap();
    let b = r.bucket(0).unwrap();
    assert_eq!((b.precision, b.recall, b.mean_iou), (None, None, None));
    assert!(r.to_csv().contains("\n0,1,,,\n"));
    assert!(evaluate(&[], &g, 0.5).is_err());
}

#[test]
fn buckets_depend_only_on_truth() {
    let g = grid3();
    let t = truth_with(&[(0, CellVector::occupied(0.2, 0.2, 0.1, 0.1)), (5, CellVector::occupied(0.7, 0.1, 0.1, 0.1))]);
    let u = truth_with(&[(8, CellVector::occupied(0.5, 0.5, 0.1, 0.1))]);
    let cnn = evaluate(&[(vec![], t.clone()), (truth_detections(&u), u.clone())], &g, 0.5).unwrap();
    let cl = evaluate(&[(truth_detections(&t), t), (vec![det(0.5, 0.5, 0.3, 0.3)], u)], &g, 0.5).unwrap();
    let keys = |r: &pedloc_core::evalkit::EvalReport| r.buckets.iter().map(|b| (b.pedestrians, b.n_frames)).collect::<Vec<_>>();
    assert_eq!(keys(&cnn), keys(&cl));
}

#[test]
fn shared_true_positive_iou() {
    let g = grid3();
    let t = truth_with(&[
        (0, CellVector::occupied(0.5, 0.5, 0.2, 0.2)),
        (4, CellVector::occupied(0.5, 0.5, 0.2, 0.2)),
    ]);
    let a = evaluate_frame(&[det(0.5, 0.5, 0.6, 0.6), det(1.5, 1.5, 0.6, 0.6)], &t, &g, 0.5).unwrap();
    let b = evaluate_frame(&[det(0.8, 0.5, 0.6, 0.6)], &t, &g, 0.5).unwrap();
    let (ma, mb, n) = shared_tp_iou(&[a.clone()], &[b]).unwrap();
    assert_eq!(n, 1);
    assert!((ma.unwrap() - 1.0).abs() < 1e-6);
    assert!((mb.unwrap() - 1.0 / 3.0).abs() < 1e-9);
    assert!(shared_tp_iou(&[a], &[]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn iou_properties(a in (0.0f64..5.0, 0.0f64..5.0, 0.01f64..3.0, 0.01f64..3.0), b in (0.0f64..5.0, 0.0f64..5.0, 0.01f64..3.0, 0.01f64..3.0)) {
        let a = BoxM { cx: a.0, cy: a.1, w: a.2, h: a.3 };
        let b = BoxM { cx: b.0, cy: b.1, w: b.2, h: b.3 };
        let ab = iou(&a, &b).unwrap();
        prop_assert!((ab - iou(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((iou(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        // moving b further away along x never increases the overlap
        let far = BoxM { cx: b.cx + if b.cx >= a.cx { 0.5 } else { -0.5 }, ..b };
        prop_assert!(iou(&a, &far).unwrap() <= ab + 1e-12);
    }

    #[test]
    fn decode_then_grid_reproduces_occupancy(ps in prop::collection::vec(0.0f32..1.0, 25), xs in prop::collection::vec(0.0f32..1.0, 25), ws in prop::collection::vec(-0.2f32..0.5, 25)) {
        let grid = GridSpec::with_cells(5);
        let cells: Vec<CellVector> = (0..25).map(|i| CellVector { x: xs[i], y: 1.0 - xs[i], w: ws[i], h: 0.1, n: 1.0 - ps[i], p: ps[i] }).collect();
        let pred = GridPrediction { s: 5, cells };
        let dets = decode(&pred, &grid, 0.5).unwrap();
        let cg = detections_to_grid(&dets, &grid, 0.5).unwrap();
        let expect: Vec<bool> = ps.iter().map(|&p| p as f64 > 0.5).collect();
        prop_assert_eq!(cg.occupancy(), expect);
    }

    #[test]
    fn truth_as_prediction_is_perfect_and_order_free(occ in prop::collection::vec(prop::collection::vec(any::<bool>(), 9), 1..6)) {
        let g = grid3();
        let frames: Vec<(Vec<Detection>, GroundTruthGrid)> = occ.iter().map(|o| {
            let cells: Vec<(usize, CellVector)> = o.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| (i, CellVector::occupied(0.4, 0.6, 0.05, 0.08))).collect();
            let t = truth_with(&cells);
            (truth_detections(&t), t)
        }).collect();
        let r = evaluate(&frames, &g, 0.5).unwrap();
        for b in &r.buckets {
            if b.pedestrians != Some(0) {
                prop_assert_eq!(b.precision, Some(1.0));
                prop_assert_eq!(b.recall, Some(1.0));
                prop_assert!((b.mean_iou.unwrap() - 1.0).abs() < 1e-9);
            }
        }
        let mut rev = frames.clone();
        rev.reverse();
        let results: Vec<_> = rev.iter().map(|(d, t)| evaluate_frame(d, t, &g, 0.5).unwrap()).collect();
        let r2 = report(&results, 0.5);
        prop_assert_eq!(r.buckets.len(), r2.buckets.len());
        for (x, y) in r.buckets.iter().zip(&r2.buckets) {
            prop_assert_eq!(x.counts, y.counts);
            prop_assert!((x.precision.unwrap_or(-1.0) - y.precision.unwrap_or(-1.0)).abs() < 1e-12);
            prop_assert!((x.recall.unwrap_or(-1.0) - y.recall.unwrap_or(-1.0)).abs() < 1e-12);
        }
    }
}
