//! Box-versus-mask divergence: per-detection records, failure-mode
//! classification, per-class F1 gaps and the elongation correlation.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::ClassTable;
use crate::mask::ShapeStats;
use crate::matching::{EvalSet, IouKind, MatchResult};
use crate::metrics::{ClassMetrics, PerClassTable};

pub const DEFAULT_OVERSIZE_RATIO: f64 = 1.5;
pub const DEFAULT_OFFSET_FRAC: f64 = 0.25;
pub const DEFAULT_COVERAGE_FRAC: f64 = 0.5;
pub const DEFAULT_FLAG_THRESHOLD: f64 = 0.10;
/// Mask IoU at or above which a record shows no divergence.
pub const MASK_SUCCESS_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceRecord {
    pub image_id: String,
    /// Index into the image's detection list.
    pub det: usize,
    /// Index into the image's ground-truth list.
    pub gt: usize,
    pub class_index: usize,
    pub score: f64,
    pub box_iou: f64,
    pub mask_iou: f64,
    /// `|pred ∧ gt| / |gt|`
    pub gt_mask_coverage: f64,
    /// `|pred| / |gt|`
    pub pred_excess: f64,
    /// Distance between mask centroids over the ground-truth box diagonal;
    /// `None` when the predicted mask is empty.
    pub centroid_offset: Option<f64>,
    pub gt_area: u64,
    pub pred_area: u64,
    /// Whether the mask run matched this detection to the same ground truth.
    pub mask_matched: bool,
    pub det_box: [f64; 4],
    pub gt_box: [f64; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum FailureMode {
    PartialMask,
    LowMaskIoU,
    LocationMismatch,
    OversizedMask,
    NoDivergence,
}

impl FailureMode {
    pub const ALL: [FailureMode; 5] = [
        FailureMode::PartialMask,
        FailureMode::LowMaskIoU,
        FailureMode::LocationMismatch,
        FailureMode::OversizedMask,
        FailureMode::NoDivergence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureMode::PartialMask => "PartialMask",
            FailureMode::LowMaskIoU => "LowMaskIoU",
            FailureMode::LocationMismatch => "LocationMismatch",
            FailureMode::OversizedMask => "OversizedMask",
            FailureMode::NoDivergence => "NoDivergence",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnoseParams {
    pub oversize_ratio: f64,
    pub offset_frac: f64,
    pub coverage_frac: f64,
}

impl Default for DiagnoseParams {
    fn default() -> Self {
        Self {
            oversize_ratio: DEFAULT_OVERSIZE_RATIO,
            offset_frac: DEFAULT_OFFSET_FRAC,
            coverage_frac: DEFAULT_COVERAGE_FRAC,
        }
    }
}

/// One record per box true positive, with mask quantities measured against
/// the ground truth the box matched.
pub fn pairwise_divergence(
    set: &EvalSet,
    box_matches: &MatchResult,
    mask_matches: &MatchResult,
) -> Result<Vec<DivergenceRecord>> {
    let (b, m) = (&box_matches.params, &mask_matches.params);
    if b.kind != IouKind::Box || m.kind != IouKind::Mask {
        return Err(Error::ParamMismatch("expected one box run and one mask run".into()));
    }
    if b.iou_threshold != m.iou_threshold || b.max_detections != m.max_detections || b.min_score != m.min_score {
        return Err(Error::ParamMismatch(format!(
            "box run (iou {}, max {}, score {}) differs from mask run (iou {}, max {}, score {})",
            b.iou_threshold, b.max_detections, b.min_score, m.iou_threshold, m.max_detections, m.min_score
        )));
    }
    let aligned = set.scenes.len() == box_matches.images.len()
        && set.scenes.len() == mask_matches.images.len()
        && set
            .scenes
            .iter()
            .zip(&box_matches.images)
            .zip(&mask_matches.images)
            .all(|((s, a), b)| s.image_id == a.image_id && s.image_id == b.image_id);
    if !aligned {
        return Err(Error::ParamMismatch("match runs do not come from this evaluation set".into()));
    }

    let per_image: Vec<Vec<DivergenceRecord>> = set
        .scenes
        .par_iter()
        .zip(&box_matches.images)
        .zip(&mask_matches.images)
        .map(|((scene, bm), mm)| {
            bm.entries
                .iter()
                .filter(|e| e.tp)
                .map(|e| {
                    let g = e.gt.expect("true positive has a ground truth");
                    let gt_mask = &scene.gt_masks[g];
                    let gt_area = gt_mask.area();
                    let denom = gt_area.max(1) as f64;
                    let (pred_area, inter, offset) = match &scene.det_masks[e.det] {
                        Some(pm) => {
                            let inter = pm.intersection_area(gt_mask).unwrap_or(0);
                            let offset = match (ShapeStats::of_rle(pm), ShapeStats::of_rle(gt_mask)) {
                                (Ok(p), Ok(t)) => {
                                    let diag = scene.gt_boxes[g].diagonal();
                                    Some(if diag > 0.0 { p.centroid.distance(&t.centroid) / diag } else { 0.0 })
                                }
                                _ => None,
                            };
                            (pm.area(), inter, offset)
                        }
                        None => (0, 0, None),
                    };
                    DivergenceRecord {
                        image_id: scene.image_id.clone(),
                        det: e.det,
                        gt: g,
                        class_index: e.class_index,
                        score: e.score,
                        box_iou: scene.box_iou(e.det, g),
                        mask_iou: scene.mask_iou(e.det, g),
                        gt_mask_coverage: inter as f64 / denom,
                        pred_excess: pred_area as f64 / denom,
                        centroid_offset: offset,
                        gt_area,
                        pred_area,
                        mask_matched: mm.entries.iter().any(|x| x.det == e.det && x.tp && x.gt == Some(g)),
                        det_box: scene.det_boxes[e.det].as_array(),
                        gt_box: scene.gt_boxes[g].as_array(),
                    }
                })
                .collect()
        })
        .collect();
    Ok(per_image.into_iter().flatten().collect())
}

/// First matching rule wins.
pub fn classify_failure(rec: &DivergenceRecord, params: &DiagnoseParams) -> FailureMode {
    if rec.mask_iou >= MASK_SUCCESS_IOU {
        FailureMode::NoDivergence
    } else if rec.pred_excess > params.oversize_ratio && rec.gt_mask_coverage >= params.coverage_frac {
        FailureMode::OversizedMask
    } else if rec.centroid_offset.is_some_and(|o| o > params.offset_frac) {
        FailureMode::LocationMismatch
    } else if rec.gt_mask_coverage < params.coverage_frac {
        FailureMode::PartialMask
    } else {
        FailureMode::LowMaskIoU
    }
}

/// Counts per class (by name) and mode, plus an overall row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModesSummary {
    pub classes: Vec<ClassModes>,
    pub total: BTreeMap<FailureMode, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassModes {
    pub class_index: usize,
    pub class: String,
    pub counts: BTreeMap<FailureMode, u64>,
}

pub fn modes_summary(
    records: &[DivergenceRecord],
    params: &DiagnoseParams,
    classes: &ClassTable,
) -> ModesSummary {
    let zero = || FailureMode::ALL.iter().map(|&m| (m, 0u64)).collect::<BTreeMap<_, _>>();
    let mut rows: Vec<ClassModes> = classes
        .real_indices()
        .map(|c| ClassModes {
            class_index: c,
            class: classes.name(c).unwrap_or_default().to_owned(),
            counts: zero(),
        })
        .collect();
    let mut total = zero();
    for r in records {
        let mode = classify_failure(r, params);
        *total.entry(mode).or_default() += 1;
        if let Some(row) = rows.iter_mut().find(|x| x.class_index == r.class_index) {
            *row.counts.entry(mode).or_default() += 1;
        }
    }
    ModesSummary { classes: rows, total }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F1Gap {
    pub class_index: usize,
    pub class: String,
    pub f1_box: Option<f64>,
    pub f1_mask: Option<f64>,
    /// `f1_box - f1_mask`
    pub gap: Option<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F1GapReport {
    pub flag_threshold: f64,
    pub rows: Vec<F1Gap>,
}

impl F1GapReport {
    pub fn flagged(&self) -> impl Iterator<Item = &F1Gap> {
        self.rows.iter().filter(|r| r.flagged)
    }
}

/// The table F1, or for a `-` cell the count form `2tp / (2tp + fp + fn)`,
/// which reads 0 for a class with ground truth or detections but no true
/// positive.
fn gap_f1(row: &ClassMetrics) -> Option<f64> {
    row.f1.or_else(|| {
        let den = 2 * row.tp + row.fp + row.fn_;
        (den > 0).then(|| 2.0 * row.tp as f64 / den as f64)
    })
}

pub fn f1_gap_report(box_table: &PerClassTable, mask_table: &PerClassTable, flag_threshold: f64) -> Result<F1GapReport> {
    let ids = |t: &PerClassTable| t.rows.iter().map(|r| (r.class_index, r.class.clone())).collect::<Vec<_>>();
    if ids(box_table) != ids(mask_table) {
        return Err(Error::ClassSetMismatch("box and mask tables list different classes".into()));
    }
    let rows = box_table
        .rows
        .iter()
        .zip(&mask_table.rows)
        .map(|(b, m)| {
            let (f1_box, f1_mask) = (gap_f1(b), gap_f1(m));
            let gap = f1_box.zip(f1_mask).map(|(x, y)| x - y);
            F1Gap {
                class_index: b.class_index,
                class: b.class.clone(),
                f1_box,
                f1_mask,
                gap,
                flagged: gap.is_some_and(|g| g > flag_threshold),
            }
        })
        .collect();
    Ok(F1GapReport { flag_threshold, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassShape {
    pub class_index: usize,
    pub class: String,
    pub instances: u64,
    pub mean_elongation: Option<f64>,
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeCorrelation {
    pub classes: Vec<ClassShape>,
    /// Classes with both a mean elongation and a defined gap.
    pub used_classes: usize,
    pub spearman: f64,
    /// Set when one of the ranked series is constant, so the coefficient is
    /// reported as 0.
    pub tied: bool,
}

/// Mean elongation of each class's ground-truth masks.
pub fn class_elongations(set: &EvalSet) -> Vec<(usize, u64, Option<f64>)> {
    let stats: Vec<(usize, f64)> = set
        .scenes
        .par_iter()
        .flat_map_iter(|s| {
            s.gt_classes
                .iter()
                .zip(&s.gt_masks)
                .filter_map(|(&c, m)| ShapeStats::of_rle(m).ok().map(|st| (c, st.elongation)))
                .collect::<Vec<_>>()
        })
        .collect();
    set.classes
        .real_indices()
        .map(|c| {
            let vals: Vec<f64> = stats.iter().filter(|s| s.0 == c).map(|s| s.1).collect();
            let n = vals.len() as u64;
            (c, n, (n > 0).then(|| vals.iter().sum::<f64>() / n as f64))
        })
        .collect()
}

pub fn shape_correlation(elongations: &[(usize, u64, Option<f64>)], gaps: &F1GapReport) -> Result<ShapeCorrelation> {
    let classes: Vec<ClassShape> = gaps
        .rows
        .iter()
        .map(|g| {
            let e = elongations.iter().find(|e| e.0 == g.class_index);
            ClassShape {
                class_index: g.class_index,
                class: g.class.clone(),
                instances: e.map_or(0, |e| e.1),
                mean_elongation: e.and_then(|e| e.2),
                gap: g.gap,
            }
        })
        .collect();
    let pairs: Vec<(f64, f64)> = classes
        .iter()
        .filter_map(|c| c.mean_elongation.zip(c.gap))
        .collect();
    if pairs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "rank correlation needs at least 3 classes with elongation and gap, found {}",
            pairs.len()
        )));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (spearman, tied) = match spearman(&xs, &ys) {
        Some(r) => (r, false),
        None => (0.0, true),
    };
    Ok(ShapeCorrelation {
        classes,
        used_classes: pairs.len(),
        spearman,
        tied,
    })
}

/// Average ranks, 1-based; tied values share the mean of their positions.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Pearson correlation of the average ranks; `None` when either series is
/// constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::BoldFlags;
    use proptest::prelude::*;

    fn rec(mask_iou: f64, pred_excess: f64, coverage: f64, offset: Option<f64>) -> DivergenceRecord {
        DivergenceRecord {
            image_id: "i".into(),
            det: 0,
            gt: 0,
            class_index: 1,
            score: 0.9,
            box_iou: 0.9,
            mask_iou,
            gt_mask_coverage: coverage,
            pred_excess,
            centroid_offset: offset,
            gt_area: 100,
            pred_area: 100,
            mask_matched: false,
            det_box: [0.0, 0.0, 10.0, 10.0],
            gt_box: [0.0, 0.0, 10.0, 10.0],
        }
    }

    #[test]
    fn ladder_examples() {
        let p = DiagnoseParams::default();
        assert_eq!(classify_failure(&rec(0.9, 1.0, 1.0, Some(0.0)), &p), FailureMode::NoDivergence);
        assert_eq!(classify_failure(&rec(0.4, 2.0, 0.95, Some(0.05)), &p), FailureMode::OversizedMask);
        assert_eq!(classify_failure(&rec(0.3, 1.0, 0.3, Some(0.05)), &p), FailureMode::PartialMask);
        assert_eq!(classify_failure(&rec(0.0, 1.0, 0.0, Some(0.4)), &p), FailureMode::LocationMismatch);
        assert_eq!(classify_failure(&rec(0.45, 1.0, 0.6, Some(0.1)), &p), FailureMode::LowMaskIoU);
        assert_eq!(classify_failure(&rec(0.0, 0.0, 0.0, None), &p), FailureMode::PartialMask);
    }

    fn row(c: usize, tp: u64, fp: u64, fn_: u64) -> ClassMetrics {
        let (p, r) = crate::metrics::precision_recall(tp, fp, fn_);
        ClassMetrics {
            class_index: c,
            class: format!("c{c}"),
            tp,
            fp,
            fn_,
            support: tp + fn_,
            precision: p,
            recall: r,
            f1: crate::metrics::f1(p, r),
            ap: None,
        }
    }

    fn table(kind: IouKind, rows: Vec<ClassMetrics>) -> PerClassTable {
        PerClassTable {
            kind,
            iou_threshold: 0.5,
            score_threshold: 0.5,
            bold: vec![BoldFlags::default(); rows.len()],
            rows,
        }
    }

    #[test]
    fn gap_examples() {
        let t = table(IouKind::Box, vec![row(1, 3, 1, 2), row(2, 0, 0, 0), row(3, 0, 0, 4)]);
        let r = f1_gap_report(&t, &t, 0.1).unwrap();
        assert!(r.flagged().next().is_none());
        assert_eq!(r.rows[0].gap, Some(0.0));
        assert_eq!(r.rows[1].gap, None);
        assert_eq!(r.rows[2].gap, Some(0.0));

        let mask = table(IouKind::Mask, vec![row(1, 0, 4, 5), row(2, 0, 0, 0), row(3, 0, 0, 4)]);
        let r = f1_gap_report(&t, &mask, 0.1).unwrap();
        assert!(r.rows[0].flagged);
        assert!((r.rows[0].gap.unwrap() - 2.0 / 3.0).abs() < 1e-12);

        let other = table(IouKind::Mask, vec![row(1, 1, 0, 0)]);
        assert!(matches!(f1_gap_report(&t, &other, 0.1), Err(Error::ClassSetMismatch(_))));
    }

    #[test]
    fn gap_from_published_cells() {
        let with_f1 = |c: usize, v: f64| ClassMetrics { f1: Some(v), ..row(c, 1, 0, 0) };
        let b = table(IouKind::Box, vec![with_f1(1, 0.4957), with_f1(7, 0.8454)]);
        let m = table(IouKind::Mask, vec![with_f1(1, 0.3170), with_f1(7, 0.8454)]);
        let r = f1_gap_report(&b, &m, DEFAULT_FLAG_THRESHOLD).unwrap();
        assert!((r.rows[0].gap.unwrap() - 0.1787).abs() < 1e-9);
        assert!(r.rows[0].flagged);
        assert_eq!(r.rows[1].gap, Some(0.0));
        assert!(!r.rows[1].flagged);
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[0.0, 0.1, 0.2]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[0.2, 0.1, 0.0]), Some(-1.0));
        assert_eq!(spearman(&[2.0, 2.0, 2.0], &[0.0, 0.1, 0.2]), None);
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn correlation_needs_three_classes() {
        let gaps = F1GapReport {
            flag_threshold: 0.1,
            rows: (1..=3)
                .map(|c| F1Gap {
                    class_index: c,
                    class: format!("c{c}"),
                    f1_box: Some(0.5),
                    f1_mask: Some(0.5),
                    gap: (c != 2).then_some(0.1 * c as f64),
                    flagged: false,
                })
                .collect(),
        };
        let elong = vec![(1, 1, Some(1.0)), (2, 1, Some(2.0)), (3, 1, Some(3.0))];
        assert!(matches!(shape_correlation(&elong, &gaps), Err(Error::InsufficientData(_))));
        let mut gaps = gaps;
        gaps.rows[1].gap = Some(0.2);
        let same = vec![(1, 1, Some(2.0)), (2, 1, Some(2.0)), (3, 1, Some(2.0))];
        let r = shape_correlation(&same, &gaps).unwrap();
        assert!(r.tied);
        assert_eq!(r.spearman, 0.0);
    }

    proptest! {
        #[test]
        fn ladder_is_total_and_rule_one_dominates(
            iou in 0.0..=1.0f64, excess in 0.0..5.0f64, cov in 0.0..=1.0f64, off in proptest::option::of(0.0..2.0f64)
        ) {
            let p = DiagnoseParams::default();
            let mode = classify_failure(&rec(iou, excess, cov, off), &p);
            prop_assert!(FailureMode::ALL.contains(&mode));
            if iou >= 0.5 {
                prop_assert_eq!(mode, FailureMode::NoDivergence);
            }
        }

        #[test]
        fn spearman_bounded(xs in proptest::collection::vec(0.0..10.0f64, 3..12)) {
            let ys: Vec<f64> = xs.iter().map(|x| (x * 7.3).sin()).collect();
            if let Some(r) = spearman(&xs, &ys) {
                prop_assert!((-1.0..=1.0).contains(&r));
            }
            if let Some(r) = spearman(&xs, &xs) {
                prop_assert!((r - 1.0).abs() < 1e-12);
            }
        }
    }
}
