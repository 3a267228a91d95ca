//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use maskeval::geometry::{BoundingBox, ImageDims, Point};
use maskeval::headsim::SimRng;
use maskeval::diagnose::{
    class_elongations, f1_gap_report, modes_summary, pairwise_divergence, shape_correlation, DiagnoseParams,
    DivergenceRecord, F1GapReport, ModesSummary, DEFAULT_FLAG_THRESHOLD,
};
use maskeval::headsim::{synth_scenario, ScenarioSpec};
use maskeval::ingest::{
    ground_truth_from_doc, predictions_from_doc, ClassTable, Detection, DetectionMask, GroundTruth,
    GroundTruthInstance, GtImage, PredImage, Predictions,
};
use maskeval::mask::{polygon_rasterize, rle_encode, DEFAULT_MASK_THRESHOLD};
use maskeval::matching::{EvalSet, IouKind, MatchParams};
use maskeval::metrics::{evaluate_kind, EvalOptions, KindEvaluation};
use maskeval::report::{diagnose_files, evaluation_files, DataStats, OutputFile, RunMetadata};

pub const FRAME: u32 = 64;

pub fn dims() -> ImageDims {
    ImageDims::new(FRAME, FRAME).unwrap()
}

pub fn below(rng: &mut SimRng, n: u64) -> u64 {
    rng.next_u64() % n
}

pub fn corners(b: &BoundingBox) -> Vec<Point> {
    vec![
        Point::new(b.x_min, b.y_min),
        Point::new(b.x_max, b.y_min),
        Point::new(b.x_max, b.y_max),
        Point::new(b.x_min, b.y_max),
    ]
}

fn random_box(rng: &mut SimRng) -> BoundingBox {
    let x = below(rng, 48) as f64;
    let y = below(rng, 48) as f64;
    let w = 2.0 + below(rng, 14) as f64;
    let h = 2.0 + below(rng, 14) as f64;
    BoundingBox::new(x, y, x + w, y + h).unwrap()
}

/// Near copy of `b` moved by up to 3 pixels per edge.
fn nudged(rng: &mut SimRng, b: &BoundingBox) -> BoundingBox {
    let mut d = || below(rng, 7) as f64 - 3.0;
    let x0 = (b.x_min + d()).clamp(0.0, 60.0);
    let y0 = (b.y_min + d()).clamp(0.0, 60.0);
    let x1 = (b.x_max + d()).clamp(x0 + 1.0, 64.0);
    let y1 = (b.y_max + d()).clamp(y0 + 1.0, 64.0);
    BoundingBox::new(x0, y0, x1, y1).unwrap()
}

/// Small random scenario: up to `max_images` images with up to 5 ground
/// truths and 8 detections each over at most 3 classes. Detections usually
/// sit near a ground truth; most carry a rectangle mask of their own box.
pub fn scenario(rng: &mut SimRng, max_images: u64) -> (GroundTruth, Predictions) {
    let classes = ClassTable::new(&["a", "b", "c"]).unwrap();
    let n_classes = 1 + below(rng, 3) as usize;
    let images = 1 + below(rng, max_images);
    let mut gt_images = Vec::new();
    let mut pred_images = Vec::new();
    for i in 0..images {
        let id = format!("img{i}");
        let gts: Vec<GroundTruthInstance> = (0..below(rng, 6))
            .map(|_| {
                let b = random_box(rng);
                GroundTruthInstance {
                    image_id: id.clone(),
                    class_index: 1 + below(rng, n_classes as u64) as usize,
                    polygon: Some(corners(&b)),
                    mask: None,
                    bbox: b,
                }
            })
            .collect();
        let dets: Vec<Detection> = (0..below(rng, 9))
            .map(|_| {
                let (b, class) = if !gts.is_empty() && below(rng, 4) != 0 {
                    let g = &gts[below(rng, gts.len() as u64) as usize];
                    let class = if below(rng, 5) == 0 {
                        1 + below(rng, n_classes as u64) as usize
                    } else {
                        g.class_index
                    };
                    (nudged(rng, &g.bbox), class)
                } else {
                    (random_box(rng), 1 + below(rng, n_classes as u64) as usize)
                };
                // coarse scores so ties occur
                let score = (1 + below(rng, 20)) as f64 / 20.0;
                let mask = (below(rng, 8) != 0).then(|| {
                    let m = polygon_rasterize(&corners(&nudged(rng, &b)), dims()).unwrap();
                    DetectionMask::Rle(rle_encode(&m))
                });
                Detection {
                    image_id: id.clone(),
                    class_index: class,
                    score,
                    bbox: b,
                    mask,
                }
            })
            .collect();
        gt_images.push(GtImage {
            id: id.clone(),
            instances: gts,
        });
        pred_images.push(PredImage { id, detections: dets });
    }
    (
        GroundTruth {
            dims: dims(),
            classes,
            images: gt_images,
        },
        Predictions {
            dims: None,
            images: pred_images,
        },
    )
}

/// Pixel-count IoU of two integer boxes.
pub fn box_iou_by_pixels(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inside = |b: &BoundingBox, x: f64, y: f64| x >= b.x_min && x < b.x_max && y >= b.y_min && y < b.y_max;
    let (mut inter, mut union) = (0u64, 0u64);
    for r in 0..FRAME {
        for c in 0..FRAME {
            let (x, y) = (c as f64 + 0.5, r as f64 + 0.5);
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            inter += (ia && ib) as u64;
            union += (ia || ib) as u64;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Greedy matching written from scratch over box IoU: `(score, tp)` lists per
/// class, pooled over images in image order then stably sorted by score.
pub fn oracle_ranked(gt: &GroundTruth, preds: &Predictions, t: f64, class: usize) -> (Vec<(f64, bool)>, u64) {
    let mut all = Vec::new();
    let mut n_gt = 0;
    for img in &gt.images {
        let gts: Vec<&GroundTruthInstance> = img.instances.iter().collect();
        n_gt += gts.iter().filter(|g| g.class_index == class).count() as u64;
        let mut dets: Vec<&Detection> = preds
            .images
            .iter()
            .find(|p| p.id == img.id)
            .map(|p| p.detections.iter().collect())
            .unwrap_or_default();
        // stable: equal scores keep input order
        dets.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
        let mut taken = vec![false; gts.len()];
        for d in dets {
            let mut best: Option<usize> = None;
            let mut best_iou = -1.0;
            for (i, g) in gts.iter().enumerate() {
                if taken[i] || g.class_index != d.class_index {
                    continue;
                }
                let iou = box_iou_by_pixels(&d.bbox, &g.bbox);
                if iou > best_iou {
                    best_iou = iou;
                    best = Some(i);
                }
            }
            let tp = match best {
                Some(i) if best_iou >= t => {
                    taken[i] = true;
                    true
                }
                _ => false,
            };
            if d.class_index == class {
                all.push((d.score, tp));
            }
        }
    }
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    (all, n_gt)
}

/// 101-point AP from the exact step curve: at each recall level, the best
/// precision at any rank reaching it (integer comparisons only).
pub fn oracle_ap(ranked: &[(f64, bool)], n_gt: u64) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let mut points = Vec::new();
    let mut tp = 0u64;
    for (i, e) in ranked.iter().enumerate() {
        tp += e.1 as u64;
        points.push((tp, i as u64 + 1));
    }
    let total: f64 = (0..=100u64)
        .map(|j| {
            points
                .iter()
                .filter(|&&(tp, _)| tp * 100 >= j * n_gt)
                .map(|&(tp, k)| tp as f64 / k as f64)
                .fold(0.0, f64::max)
        })
        .sum();
    Some(total / 101.0)
}

/// Bilinear sample of a grid at pixel center `(x, y)` written as a tent
/// filter sum over all cells, clamped at the grid border.
pub fn oracle_grid_value(values: &[f64], side: usize, b: &BoundingBox, x: f64, y: f64) -> f64 {
    let s = side as f64;
    let gx = ((x - b.x_min) / b.width() * s - 0.5).clamp(0.0, s - 1.0);
    let gy = ((y - b.y_min) / b.height() * s - 0.5).clamp(0.0, s - 1.0);
    let mut v = 0.0;
    for r in 0..side {
        for c in 0..side {
            let wx = (1.0 - (gx - c as f64).abs()).max(0.0);
            let wy = (1.0 - (gy - r as f64).abs()).max(0.0);
            v += wx * wy * values[r * side + c];
        }
    }
    v
}

pub fn synthesize(spec: &ScenarioSpec) -> (GroundTruth, Predictions) {
    let (g, p) = synth_scenario(spec).unwrap();
    (ground_truth_from_doc(&g).unwrap(), predictions_from_doc(&p).unwrap())
}

/// Everything `evaluate` and `diagnose` compute, at default settings.
pub struct Pipeline {
    pub set: EvalSet,
    pub stats: DataStats,
    pub box_eval: KindEvaluation,
    pub mask_eval: KindEvaluation,
    pub records: Vec<DivergenceRecord>,
    pub modes: ModesSummary,
    pub gaps: F1GapReport,
}

impl Pipeline {
    pub fn run(gt: &GroundTruth, preds: &Predictions) -> Self {
        let set = EvalSet::build(gt, preds, DEFAULT_MASK_THRESHOLD).unwrap();
        let opts = EvalOptions::default();
        let run = |kind| {
            set.match_detections(
                &MatchParams::new(kind)
                    .with_threshold(opts.iou_threshold)
                    .with_max_detections(opts.max_detections)
                    .with_min_score(opts.score_threshold),
            )
        };
        let records = pairwise_divergence(&set, &run(IouKind::Box), &run(IouKind::Mask)).unwrap();
        let modes = modes_summary(&records, &DiagnoseParams::default(), &set.classes);
        let box_eval = evaluate_kind(&set, IouKind::Box, &opts).unwrap();
        let mask_eval = evaluate_kind(&set, IouKind::Mask, &opts).unwrap();
        let gaps = f1_gap_report(&box_eval.per_class, &mask_eval.per_class, DEFAULT_FLAG_THRESHOLD).unwrap();
        let stats = DataStats {
            images: set.scenes.len(),
            ground_truth: gt.instance_count(),
            detections: preds.detection_count(),
            missing_masks: preds.images.iter().flat_map(|i| &i.detections).filter(|d| d.mask.is_none()).count(),
        };
        Self { set, stats, box_eval, mask_eval, records, modes, gaps }
    }

    /// Report files of both commands, in a fixed order.
    pub fn files(&self) -> Vec<OutputFile> {
        let opts = EvalOptions::default();
        let meta = RunMetadata::new("test", Default::default());
        let confusion = self.set.confusion_matrix(opts.iou_threshold, opts.max_detections, opts.score_threshold);
        let mut files =
            evaluation_files(&meta, &self.stats, &[self.box_eval.clone(), self.mask_eval.clone()], &confusion)
                .unwrap();
        let corr = shape_correlation(&class_elongations(&self.set), &self.gaps).map_err(|e| e.to_string());
        files.extend(
            diagnose_files(
                &meta,
                self.set.classes.all_names(),
                &self.records,
                &DiagnoseParams::default(),
                &self.modes,
                corr.as_ref().map_err(|e| e.clone()),
            )
            .unwrap(),
        );
        files
    }

    pub fn total(&self, mode: maskeval::diagnose::FailureMode) -> u64 {
        self.modes.total.get(&mode).copied().unwrap_or(0)
    }
}

fn summary_at_all_thresholds(set: &EvalSet, kind: IouKind) -> maskeval::metrics::SummaryMetrics {
    let runs: Vec<_> = maskeval::metrics::iou_thresholds()
        .iter()
        .map(|&t| set.match_detections(&MatchParams::new(kind).with_threshold(t)))
        .collect();
    maskeval::metrics::summary(&runs, &set.classes).unwrap()
}

/// Checks the orderings every evaluation must respect, for both kinds.
/// Returns one message per violation.
pub fn protocol_violations(set: &EvalSet) -> Vec<String> {
    let mut out = Vec::new();
    let thresholds = maskeval::metrics::iou_thresholds();
    for kind in [IouKind::Box, IouKind::Mask] {
        let s = summary_at_all_thresholds(set, kind);
        if let (Some(a50), Some(a75)) = (s.ap50, s.ap75) {
            if a50 < a75 - 1e-12 {
                out.push(format!("{kind:?}: AP50 {a50} < AP75 {a75}"));
            }
        }
        if let (Some(a), Some(b), Some(c)) = (s.ar_at_1, s.ar_at_10, s.ar_at_100) {
            if a > b + 1e-12 || b > c + 1e-12 {
                out.push(format!("{kind:?}: AR@1 {a}, AR@10 {b}, AR@100 {c} out of order"));
            }
        }
        let runs: Vec<_> = thresholds
            .iter()
            .map(|&t| set.match_detections(&MatchParams::new(kind).with_threshold(t)))
            .collect();
        for (w, pair) in thresholds.windows(2).zip(runs.windows(2)) {
            for (lo, hi) in pair[0].images.iter().zip(&pair[1].images) {
                let (mut a, mut b) = (0, 0);
                for (x, y) in lo.entries.iter().zip(&hi.entries) {
                    a += x.tp as usize;
                    b += y.tp as usize;
                    if b > a {
                        out.push(format!("{kind:?} {}: TP count rose from IoU {} to {}", lo.image_id, w[0], w[1]));
                        break;
                    }
                }
            }
        }
        for (t, r) in thresholds.iter().zip(&runs) {
            for img in &r.images {
                let mut used: Vec<usize> = img.entries.iter().filter_map(|e| e.gt).collect();
                let n = used.len();
                used.sort_unstable();
                used.dedup();
                if used.len() != n {
                    out.push(format!("{kind:?} {} at IoU {t}: a ground truth matched twice", img.image_id));
                }
            }
        }
    }
    out
}
