//! Precision/recall/F1, interpolated AP, mAP and AR@k, and per-class tables.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::ClassTable;
use crate::matching::{EvalSet, IouKind, MatchParams, MatchResult, DEFAULT_MAX_DETECTIONS};

/// Number of evenly spaced recall samples used for interpolated AP.
pub const RECALL_POINTS: usize = 101;
pub const AR_CAPS: [usize; 3] = [1, 10, 100];
pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.5;

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

/// `None` marks a 0/0 quotient.
pub fn precision_recall(tp: u64, fp: u64, fn_: u64) -> (Option<f64>, Option<f64>) {
    (ratio(tp, tp + fp), ratio(tp, tp + fn_))
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Harmonic mean; undefined when either input is, or when both are zero.
pub fn f1(precision: Option<f64>, recall: Option<f64>) -> Option<f64> {
    let (p, r) = (precision?, recall?);
    (p + r > 0.0).then(|| 2.0 * p * r / (p + r))
}

/// Four decimals, or `-` for an undefined value.
pub fn render_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |x| format!("{x:.4}"))
}

/// Raw and interpolated precision/recall for one class at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrCurve {
    pub recall: Vec<f64>,
    pub precision: Vec<f64>,
    /// Envelope precision at recall 0.00, 0.01, ..., 1.00.
    pub interpolated: Vec<f64>,
}

/// `ranked` holds `(score, is_tp)` sorted by score descending.
pub fn pr_curve(ranked: &[(f64, bool)], total_gt: u64) -> PrCurve {
    let mut recall = Vec::with_capacity(ranked.len());
    let mut precision = Vec::with_capacity(ranked.len());
    let mut tp = 0u64;
    for (i, &(_, hit)) in ranked.iter().enumerate() {
        tp += hit as u64;
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(if total_gt == 0 { 0.0 } else { tp as f64 / total_gt as f64 });
    }
    let mut envelope = precision.clone();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let interpolated = (0..RECALL_POINTS)
        .map(|j| {
            let r = j as f64 / (RECALL_POINTS - 1) as f64;
            let at = recall.partition_point(|&x| x < r);
            envelope.get(at).copied().unwrap_or(0.0)
        })
        .collect();
    PrCurve {
        recall,
        precision,
        interpolated,
    }
}

/// 101-point interpolated AP; `None` when the class has no ground truth.
pub fn average_precision(ranked: &[(f64, bool)], total_gt: u64) -> Option<f64> {
    if total_gt == 0 {
        return None;
    }
    let curve = pr_curve(ranked, total_gt);
    Some(curve.interpolated.iter().sum::<f64>() / RECALL_POINTS as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryMetrics {
    pub kind: IouKind,
    #[serde(rename = "mAP")]
    pub map: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ar_at_1: Option<f64>,
    pub ar_at_10: Option<f64>,
    pub ar_at_100: Option<f64>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn find_threshold(results: &[MatchResult], t: f64) -> Result<&MatchResult> {
    results
        .iter()
        .find(|r| (r.params.iou_threshold - t).abs() < 1e-9)
        .ok_or_else(|| Error::ParamMismatch(format!("no match run at IoU {t:.2}")))
}

/// Recall at one threshold when each image contributes at most `cap`
/// detections, for every class with ground truth.
fn recall_capped(result: &MatchResult, classes: &ClassTable, cap: usize) -> Vec<f64> {
    classes
        .real_indices()
        .filter_map(|c| {
            let n = result.gt_count(c);
            (n > 0).then(|| {
                let tp = result.ranked_capped(c, cap).iter().filter(|e| e.1).count();
                tp as f64 / n as f64
            })
        })
        .collect()
}

/// COCO-style summary from match runs at all ten IoU thresholds of one kind.
pub fn summary(results: &[MatchResult], classes: &ClassTable) -> Result<SummaryMetrics> {
    let kind = results
        .first()
        .ok_or_else(|| Error::ParamMismatch("no match runs".into()))?
        .params
        .kind;
    if results.iter().any(|r| r.params.kind != kind) {
        return Err(Error::ParamMismatch("match runs mix box and mask IoU".into()));
    }
    let runs = iou_thresholds()
        .iter()
        .map(|&t| find_threshold(results, t))
        .collect::<Result<Vec<_>>>()?;

    let class_ap = |r: &MatchResult| -> Vec<f64> {
        classes
            .real_indices()
            .filter_map(|c| average_precision(&r.ranked(c), r.gt_count(c)))
            .collect()
    };
    let ar = |k: usize| mean(runs.iter().flat_map(|r| recall_capped(r, classes, k)));
    Ok(SummaryMetrics {
        kind,
        map: mean(runs.iter().flat_map(|r| class_ap(r))),
        ap50: mean(class_ap(runs[0])),
        ap75: mean(class_ap(runs[5])),
        ar_at_1: ar(AR_CAPS[0]),
        ar_at_10: ar(AR_CAPS[1]),
        ar_at_100: ar(AR_CAPS[2]),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class_index: usize,
    pub class: String,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// Ground-truth instance count.
    pub support: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// AP at the table's IoU threshold over all detections, ignoring the
    /// score cut.
    pub ap: Option<f64>,
}

/// Per-column "best value" markers for report rendering; ties are all marked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct BoldFlags {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
    pub ap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerClassTable {
    pub kind: IouKind,
    pub iou_threshold: f64,
    pub score_threshold: f64,
    pub rows: Vec<ClassMetrics>,
    pub bold: Vec<BoldFlags>,
}

impl PerClassTable {
    pub fn row(&self, class_index: usize) -> Option<&ClassMetrics> {
        self.rows.iter().find(|r| r.class_index == class_index)
    }
}

/// Count-based P/R/F1 over detections scoring at least `score_threshold`.
///
/// Because detections are matched in score order, the matches of the
/// above-threshold prefix are the same as in the unfiltered run.
pub fn per_class_table(result: &MatchResult, classes: &ClassTable, score_threshold: f64) -> PerClassTable {
    let rows: Vec<ClassMetrics> = classes
        .real_indices()
        .map(|c| {
            let support = result.gt_count(c);
            let ranked = result.ranked(c);
            let kept = ranked.iter().take_while(|e| e.0 >= score_threshold);
            let (tp, fp) = kept.fold((0, 0), |(t, f), e| if e.1 { (t + 1, f) } else { (t, f + 1) });
            let fn_ = support - tp;
            let (precision, recall) = precision_recall(tp, fp, fn_);
            ClassMetrics {
                class_index: c,
                class: classes.name(c).unwrap_or_default().to_owned(),
                tp,
                fp,
                fn_,
                support,
                precision,
                recall,
                f1: f1(precision, recall),
                ap: average_precision(&ranked, support),
            }
        })
        .collect();

    let mut bold = vec![BoldFlags::default(); rows.len()];
    let columns: [(fn(&ClassMetrics) -> Option<f64>, fn(&mut BoldFlags)); 4] = [
        (|r| r.precision, |b| b.precision = true),
        (|r| r.recall, |b| b.recall = true),
        (|r| r.f1, |b| b.f1 = true),
        (|r| r.ap, |b| b.ap = true),
    ];
    for (get, set) in columns {
        let best = rows.iter().filter_map(get).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
        if let Some(best) = best {
            for (row, flags) in rows.iter().zip(bold.iter_mut()) {
                if get(row) == Some(best) {
                    set(flags);
                }
            }
        }
    }
    PerClassTable {
        kind: result.params.kind,
        iou_threshold: result.params.iou_threshold,
        score_threshold,
        rows,
        bold,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalOptions {
    pub iou_threshold: f64,
    pub score_threshold: f64,
    pub max_detections: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            score_threshold: DEFAULT_SCORE_THRESHOLD,
            max_detections: DEFAULT_MAX_DETECTIONS,
        }
    }
}

impl EvalOptions {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("iou", self.iou_threshold), ("score", self.score_threshold)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::ParamMismatch(format!("{name} threshold {v} must lie in (0, 1)")));
            }
        }
        if self.max_detections == 0 {
            return Err(Error::ParamMismatch("max detections must be at least 1".into()));
        }
        Ok(())
    }
}

/// PR curves of one class at every sweep threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassCurves {
    pub class_index: usize,
    pub class: String,
    pub support: u64,
    pub thresholds: Vec<ThresholdCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdCurve {
    pub iou_threshold: f64,
    pub ap: Option<f64>,
    #[serde(flatten)]
    pub curve: PrCurve,
}

/// Everything computed for one IoU kind.
#[derive(Debug, Clone)]
pub struct KindEvaluation {
    pub kind: IouKind,
    pub summary: SummaryMetrics,
    pub per_class: PerClassTable,
    /// The match run behind `per_class`.
    pub operating: MatchResult,
    pub curves: Vec<ClassCurves>,
}

pub fn evaluate_kind(set: &EvalSet, kind: IouKind, opts: &EvalOptions) -> Result<KindEvaluation> {
    opts.validate()?;
    let base = MatchParams::new(kind).with_max_detections(opts.max_detections);
    let sweep: Vec<MatchResult> = iou_thresholds()
        .par_iter()
        .map(|&t| set.match_detections(&base.with_threshold(t)))
        .collect();
    let summary = summary(&sweep, &set.classes)?;
    let operating = match find_threshold(&sweep, opts.iou_threshold) {
        Ok(r) => r.clone(),
        Err(_) => set.match_detections(&base.with_threshold(opts.iou_threshold)),
    };
    let per_class = per_class_table(&operating, &set.classes, opts.score_threshold);
    let curves = set
        .classes
        .real_indices()
        .map(|c| {
            let support = sweep[0].gt_count(c);
            ClassCurves {
                class_index: c,
                class: set.classes.name(c).unwrap_or_default().to_owned(),
                support,
                thresholds: sweep
                    .iter()
                    .map(|r| {
                        let ranked = r.ranked(c);
                        ThresholdCurve {
                            iou_threshold: r.params.iou_threshold,
                            ap: average_precision(&ranked, support),
                            curve: pr_curve(&ranked, support),
                        }
                    })
                    .collect(),
            }
        })
        .collect();
    Ok(KindEvaluation {
        kind,
        summary,
        per_class,
        operating,
        curves,
    })
}
