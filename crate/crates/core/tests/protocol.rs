mod common;

use common::{corners, dims, protocol_violations, scenario};
use maskeval::geometry::BoundingBox;
use maskeval::headsim::SimRng;
use maskeval::ingest::{ClassTable, Detection, DetectionMask, GroundTruth, GroundTruthInstance, GtImage, PredImage, Predictions};
use maskeval::mask::{polygon_rasterize, rle_encode};
use maskeval::matching::{EvalSet, IouKind, MatchParams};
use maskeval::metrics::{evaluate_kind, iou_thresholds, summary, EvalOptions, SummaryMetrics};

fn summary_of(set: &EvalSet, kind: IouKind) -> SummaryMetrics {
    let runs: Vec<_> = iou_thresholds()
        .iter()
        .map(|&t| set.match_detections(&MatchParams::new(kind).with_threshold(t)))
        .collect();
    summary(&runs, &set.classes).unwrap()
}

fn single_image(gts: Vec<(usize, BoundingBox)>, dets: Vec<(usize, f64, BoundingBox)>) -> (GroundTruth, Predictions) {
    let gt = GroundTruth {
        dims: dims(),
        classes: ClassTable::new(&["a", "b"]).unwrap(),
        images: vec![GtImage {
            id: "x".into(),
            instances: gts
                .into_iter()
                .map(|(c, b)| GroundTruthInstance {
                    image_id: "x".into(),
                    class_index: c,
                    polygon: Some(corners(&b)),
                    mask: None,
                    bbox: b,
                })
                .collect(),
        }],
    };
    let preds = Predictions {
        dims: None,
        images: vec![PredImage {
            id: "x".into(),
            detections: dets
                .into_iter()
                .map(|(c, s, b)| Detection {
                    image_id: "x".into(),
                    class_index: c,
                    score: s,
                    bbox: b,
                    mask: Some(DetectionMask::Rle(rle_encode(&polygon_rasterize(&corners(&b), dims()).unwrap()))),
                })
                .collect(),
        }],
    };
    (gt, preds)
}

fn bx(a: f64, b: f64, c: f64, d: f64) -> BoundingBox {
    BoundingBox::new(a, b, c, d).unwrap()
}

#[test]
fn perfect_detections_score_one() {
    let g = [bx(0.0, 0.0, 10.0, 10.0), bx(20.0, 20.0, 30.0, 28.0)];
    let (gt, p) = single_image(vec![(1, g[0]), (2, g[1])], vec![(1, 0.9, g[0]), (2, 0.8, g[1])]);
    let set = EvalSet::build(&gt, &p, 0.5).unwrap();
    for kind in [IouKind::Box, IouKind::Mask] {
        let s = summary_of(&set, kind);
        for v in [s.map, s.ap50, s.ap75, s.ar_at_10, s.ar_at_100] {
            assert_eq!(v, Some(1.0));
        }
    }
}

#[test]
fn recall_cap_per_image() {
    let g = [bx(0.0, 0.0, 10.0, 10.0), bx(20.0, 20.0, 30.0, 28.0)];
    let (gt, p) = single_image(vec![(1, g[0]), (1, g[1])], vec![(1, 0.9, g[0]), (1, 0.8, g[1])]);
    let s = summary_of(&EvalSet::build(&gt, &p, 0.5).unwrap(), IouKind::Box);
    assert_eq!(s.ar_at_1, Some(0.5));
    assert_eq!(s.ar_at_10, Some(1.0));
}

#[test]
fn empty_predictions_score_zero() {
    let (gt, mut p) = single_image(vec![(1, bx(0.0, 0.0, 10.0, 10.0))], vec![]);
    p.images.clear();
    let s = summary_of(&EvalSet::build(&gt, &p, 0.5).unwrap(), IouKind::Mask);
    for v in [s.map, s.ap50, s.ap75, s.ar_at_1, s.ar_at_10, s.ar_at_100] {
        assert_eq!(v, Some(0.0));
    }
}

#[test]
fn no_ground_truth_leaves_summary_undefined() {
    let (gt, p) = single_image(vec![], vec![(1, 0.9, bx(0.0, 0.0, 4.0, 4.0))]);
    let s = summary_of(&EvalSet::build(&gt, &p, 0.5).unwrap(), IouKind::Box);
    assert_eq!(s.map, None);
    assert_eq!(s.ar_at_100, None);
}

#[test]
fn random_scenarios_respect_protocol_orderings() {
    let mut rng = SimRng::new(20240611);
    for _ in 0..300 {
        let (gt, preds) = scenario(&mut rng, 3);
        let set = EvalSet::build(&gt, &preds, 0.5).unwrap();
        let v = protocol_violations(&set);
        assert!(v.is_empty(), "{v:?}");
    }
}

#[test]
fn trailing_false_positive_never_raises_metrics() {
    let mut rng = SimRng::new(99);
    for _ in 0..150 {
        let (gt, preds) = scenario(&mut rng, 2);
        let mut worse = preds.clone();
        let lowest = preds
            .images
            .iter()
            .flat_map(|i| &i.detections)
            .map(|d| d.score)
            .fold(1.0, f64::min);
        // a one-pixel box overlaps any ground truth (area >= 4) by IoU <= 1/4
        let speck = bx(63.0, 63.0, 64.0, 64.0);
        let first = worse.images[0].id.clone();
        worse.images[0].detections.push(Detection {
            image_id: first,
            class_index: 1,
            score: lowest / 2.0,
            bbox: speck,
            mask: Some(DetectionMask::Rle(rle_encode(&polygon_rasterize(&corners(&speck), dims()).unwrap()))),
        });
        let a = EvalSet::build(&gt, &preds, 0.5).unwrap();
        let b = EvalSet::build(&gt, &worse, 0.5).unwrap();
        for kind in [IouKind::Box, IouKind::Mask] {
            let (sa, sb) = (summary_of(&a, kind), summary_of(&b, kind));
            let pairs = [
                (sa.map, sb.map),
                (sa.ap50, sb.ap50),
                (sa.ap75, sb.ap75),
                (sa.ar_at_1, sb.ar_at_1),
                (sa.ar_at_10, sb.ar_at_10),
                (sa.ar_at_100, sb.ar_at_100),
            ];
            for (x, y) in pairs {
                if let (Some(x), Some(y)) = (x, y) {
                    assert!(y <= x + 1e-12, "{kind:?}: {x} -> {y}");
                }
            }
            let opts = EvalOptions { score_threshold: 0.0001, ..EvalOptions::default() };
            let (ta, tb) = (
                evaluate_kind(&a, kind, &opts).unwrap().per_class,
                evaluate_kind(&b, kind, &opts).unwrap().per_class,
            );
            for (ra, rb) in ta.rows.iter().zip(&tb.rows) {
                for (x, y) in [(ra.precision, rb.precision), (ra.recall, rb.recall), (ra.f1, rb.f1), (ra.ap, rb.ap)] {
                    if let (Some(x), Some(y)) = (x, y) {
                        assert!(y <= x + 1e-12);
                    }
                }
            }
        }
    }
}
