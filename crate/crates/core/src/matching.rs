//! Confidence-ordered greedy assignment of detections to ground truth.
//!
//! Each image is prepared once ([`EvalSet::build`]): masks are materialized
//! and every detection/ground-truth IoU is cached, so re-matching at many
//! thresholds only replays the greedy pass.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IngestErrors, IngestIssue, Result};
use crate::geometry::{box_iou, BoundingBox, ImageDims};
use crate::ingest::{ClassTable, DetectionMask, GroundTruth, Predictions};
use crate::mask::{grid_extrapolate, rle_encode, RleMask, DEFAULT_MASK_THRESHOLD};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
pub const DEFAULT_MAX_DETECTIONS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IouKind {
    Box,
    Mask,
}

impl IouKind {
    pub fn as_str(self) -> &'static str {
        match self {
            IouKind::Box => "box",
            IouKind::Mask => "mask",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchParams {
    pub iou_threshold: f64,
    pub max_detections: usize,
    pub kind: IouKind,
    /// Detections scoring below this are not considered at all.
    pub min_score: f64,
}

impl MatchParams {
    pub fn new(kind: IouKind) -> Self {
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            max_detections: DEFAULT_MAX_DETECTIONS,
            kind,
            min_score: 0.0,
        }
    }

    pub fn with_threshold(mut self, t: f64) -> Self {
        self.iou_threshold = t;
        self
    }

    pub fn with_max_detections(mut self, n: usize) -> Self {
        self.max_detections = n;
        self
    }

    pub fn with_min_score(mut self, s: f64) -> Self {
        self.min_score = s;
        self
    }
}

/// One ranked detection and its greedy outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchEntry {
    /// Index into the image's detection list.
    pub det: usize,
    pub class_index: usize,
    pub score: f64,
    /// Index into the image's ground-truth list.
    pub gt: Option<usize>,
    /// IoU with the matched ground truth, or the best same-class IoU seen for
    /// a false positive.
    pub iou: f64,
    pub tp: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageMatch {
    pub image_id: String,
    /// Non-increasing score order.
    pub entries: Vec<MatchEntry>,
    pub unmatched_gts: Vec<usize>,
    /// Detections counted as false positives because a mask-kind match was
    /// requested and they carry no mask.
    pub missing_masks: Vec<usize>,
    pub gt_classes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn gt(&self) -> u64 {
        self.tp + self.fn_
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub params: MatchParams,
    pub images: Vec<ImageMatch>,
}

impl MatchResult {
    pub fn counts(&self, class_index: usize) -> Counts {
        let mut c = Counts::default();
        for img in &self.images {
            for e in img.entries.iter().filter(|e| e.class_index == class_index) {
                if e.tp {
                    c.tp += 1;
                } else {
                    c.fp += 1;
                }
            }
            c.fn_ += img
                .unmatched_gts
                .iter()
                .filter(|&&g| img.gt_classes[g] == class_index)
                .count() as u64;
        }
        c
    }

    pub fn gt_count(&self, class_index: usize) -> u64 {
        self.images
            .iter()
            .map(|i| i.gt_classes.iter().filter(|&&c| c == class_index).count() as u64)
            .sum()
    }

    /// `(score, tp)` pairs of one class pooled across images, sorted by score
    /// descending; ties keep image order, then rank order.
    pub fn ranked(&self, class_index: usize) -> Vec<(f64, bool)> {
        self.ranked_capped(class_index, usize::MAX)
    }

    /// As [`ranked`](Self::ranked), keeping only each image's `cap`
    /// highest-ranked detections (all classes counted toward the cap).
    pub fn ranked_capped(&self, class_index: usize, cap: usize) -> Vec<(f64, bool)> {
        let mut out: Vec<(f64, bool)> = self
            .images
            .iter()
            .flat_map(|img| img.entries.iter().take(cap))
            .filter(|e| e.class_index == class_index)
            .map(|e| (e.score, e.tp))
            .collect();
        out.sort_by(|a, b| b.0.total_cmp(&a.0));
        out
    }

    pub fn missing_mask_count(&self) -> usize {
        self.images.iter().map(|i| i.missing_masks.len()).sum()
    }
}

/// Evaluation-ready view of one image.
#[derive(Debug, Clone)]
pub struct ImageScene {
    pub image_id: String,
    pub gt_classes: Vec<usize>,
    pub gt_boxes: Vec<BoundingBox>,
    pub gt_masks: Vec<RleMask>,
    pub det_classes: Vec<usize>,
    pub det_scores: Vec<f64>,
    pub det_boxes: Vec<BoundingBox>,
    pub det_masks: Vec<Option<RleMask>>,
    /// Detection indices by descending score, ties in input order.
    pub order: Vec<usize>,
    box_iou: Vec<f64>,
    mask_iou: Vec<f64>,
}

impl ImageScene {
    fn n_gt(&self) -> usize {
        self.gt_classes.len()
    }

    pub fn box_iou(&self, det: usize, gt: usize) -> f64 {
        self.box_iou[det * self.n_gt() + gt]
    }

    /// Mask IoU of a same-class pair; 0 when the detection has no mask.
    pub fn mask_iou(&self, det: usize, gt: usize) -> f64 {
        let v = self.mask_iou[det * self.n_gt() + gt];
        if v.is_nan() {
            self.det_masks[det]
                .as_ref()
                .map_or(0.0, |m| m.iou(&self.gt_masks[gt]).unwrap_or(0.0))
        } else {
            v
        }
    }

    fn iou(&self, kind: IouKind, det: usize, gt: usize) -> f64 {
        match kind {
            IouKind::Box => self.box_iou(det, gt),
            IouKind::Mask => self.mask_iou(det, gt),
        }
    }

    fn ranked(&self, params: &MatchParams) -> impl Iterator<Item = usize> + '_ {
        let min = params.min_score;
        self.order
            .iter()
            .copied()
            .filter(move |&d| self.det_scores[d] >= min)
            .take(params.max_detections)
    }

    fn greedy(&self, params: &MatchParams) -> ImageMatch {
        let mut used = vec![false; self.n_gt()];
        let mut entries = Vec::new();
        let mut missing_masks = Vec::new();
        for d in self.ranked(params) {
            let class_index = self.det_classes[d];
            let mut entry = MatchEntry {
                det: d,
                class_index,
                score: self.det_scores[d],
                gt: None,
                iou: 0.0,
                tp: false,
            };
            if params.kind == IouKind::Mask && self.det_masks[d].is_none() {
                missing_masks.push(d);
                entries.push(entry);
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for g in 0..self.n_gt() {
                if used[g] || self.gt_classes[g] != class_index {
                    continue;
                }
                let iou = self.iou(params.kind, d, g);
                if best.is_none_or(|(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            if let Some((g, iou)) = best {
                entry.iou = iou;
                if iou >= params.iou_threshold {
                    used[g] = true;
                    entry.gt = Some(g);
                    entry.tp = true;
                }
            }
            entries.push(entry);
        }
        ImageMatch {
            image_id: self.image_id.clone(),
            entries,
            unmatched_gts: (0..self.n_gt()).filter(|&g| !used[g]).collect(),
            missing_masks,
            gt_classes: self.gt_classes.clone(),
        }
    }
}

/// Ground truth and predictions joined per image, masks materialized and
/// IoUs cached.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub classes: ClassTable,
    pub dims: ImageDims,
    pub mask_threshold: f64,
    pub scenes: Vec<ImageScene>,
}

impl EvalSet {
    /// Joins by image id: ground-truth images first in file order, then any
    /// prediction-only images in their file order.
    pub fn build(gt: &GroundTruth, preds: &Predictions, mask_threshold: f64) -> Result<Self> {
        if !(mask_threshold > 0.0 && mask_threshold < 1.0) {
            return Err(Error::InvalidThreshold(mask_threshold));
        }
        let dims = gt.dims;
        let k = gt.classes.num_classes();
        let mut issues = Vec::new();
        if let Some(pd) = preds.dims {
            if pd != dims {
                issues.push(IngestIssue::document(format!(
                    "prediction frame {pd} differs from ground-truth frame {dims}"
                )));
            }
        }
        for img in &preds.images {
            for (i, d) in img.detections.iter().enumerate() {
                if d.class_index > k {
                    issues.push(IngestIssue::new(
                        Some(&img.id),
                        Some(i),
                        format!("class index {} exceeds the {k} known classes", d.class_index),
                    ));
                }
                if let Some(DetectionMask::Rle(r)) = &d.mask {
                    if r.dims() != dims {
                        issues.push(IngestIssue::new(
                            Some(&img.id),
                            Some(i),
                            format!("mask dims {} differ from frame {dims}", r.dims()),
                        ));
                    }
                }
            }
        }
        if !issues.is_empty() {
            return Err(Error::Ingest(IngestErrors(issues)));
        }

        let mut pairs: Vec<(String, Option<usize>, Option<usize>)> = gt
            .images
            .iter()
            .enumerate()
            .map(|(gi, img)| {
                let pi = preds.images.iter().position(|p| p.id == img.id);
                (img.id.clone(), Some(gi), pi)
            })
            .collect();
        for (pi, p) in preds.images.iter().enumerate() {
            if !gt.images.iter().any(|g| g.id == p.id) {
                pairs.push((p.id.clone(), None, Some(pi)));
            }
        }

        let scenes = pairs
            .par_iter()
            .map(|(id, gi, pi)| {
                let gts = gi.map_or(&[][..], |i| &gt.images[i].instances[..]);
                let dets = pi.map_or(&[][..], |i| &preds.images[i].detections[..]);
                build_scene(id, gts, dets, dims, mask_threshold)
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            classes: gt.classes.clone(),
            dims,
            mask_threshold,
            scenes,
        })
    }

    pub fn match_detections(&self, params: &MatchParams) -> MatchResult {
        MatchResult {
            params: *params,
            images: self.scenes.par_iter().map(|s| s.greedy(params)).collect(),
        }
    }

    pub fn confusion_matrix(&self, iou_threshold: f64, max_detections: usize, min_score: f64) -> ConfusionMatrix {
        let params = MatchParams::new(IouKind::Box)
            .with_threshold(iou_threshold)
            .with_max_detections(max_detections)
            .with_min_score(min_score);
        let size = self.classes.num_classes() + 1;
        let mut cells = vec![vec![0u64; size]; size];
        for scene in &self.scenes {
            let mut used = vec![false; scene.n_gt()];
            for d in scene.ranked(&params) {
                let mut best: Option<(usize, f64)> = None;
                for g in 0..scene.n_gt() {
                    if used[g] {
                        continue;
                    }
                    let iou = scene.box_iou(d, g);
                    if best.is_none_or(|(_, b)| iou > b) {
                        best = Some((g, iou));
                    }
                }
                let pred = scene.det_classes[d];
                match best {
                    Some((g, iou)) if iou >= iou_threshold => {
                        used[g] = true;
                        cells[scene.gt_classes[g]][pred] += 1;
                    }
                    _ => cells[0][pred] += 1,
                }
            }
            for g in (0..scene.n_gt()).filter(|&g| !used[g]) {
                cells[scene.gt_classes[g]][0] += 1;
            }
        }
        ConfusionMatrix {
            labels: self.classes.all_names().to_vec(),
            cells,
        }
    }
}

fn build_scene(
    id: &str,
    gts: &[crate::ingest::GroundTruthInstance],
    dets: &[crate::ingest::Detection],
    dims: ImageDims,
    mask_threshold: f64,
) -> Result<ImageScene> {
    let gt_masks = gts.iter().map(|g| g.rle(dims)).collect::<Result<Vec<_>>>()?;
    let det_masks = dets
        .iter()
        .map(|d| match &d.mask {
            None => Ok(None),
            Some(DetectionMask::Rle(r)) => Ok(Some(r.clone())),
            Some(DetectionMask::Grid(g)) => {
                grid_extrapolate(g, &d.bbox, dims, mask_threshold).map(|m| Some(rle_encode(&m)))
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));

    let n_gt = gts.len();
    let mut box_iou_m = Vec::with_capacity(dets.len() * n_gt);
    let mut mask_iou_m = Vec::with_capacity(dets.len() * n_gt);
    for (d, det) in dets.iter().enumerate() {
        for (g, gt) in gts.iter().enumerate() {
            box_iou_m.push(box_iou(&det.bbox, &gt.bbox));
            let m = if det.class_index == gt.class_index {
                det_masks[d].as_ref().map_or(0.0, |m| m.iou(&gt_masks[g]).unwrap_or(0.0))
            } else {
                f64::NAN
            };
            mask_iou_m.push(m);
        }
    }

    Ok(ImageScene {
        image_id: id.to_owned(),
        gt_classes: gts.iter().map(|g| g.class_index).collect(),
        gt_boxes: gts.iter().map(|g| g.bbox).collect(),
        gt_masks,
        det_classes: dets.iter().map(|d| d.class_index).collect(),
        det_scores: dets.iter().map(|d| d.score).collect(),
        det_boxes: dets.iter().map(|d| d.bbox).collect(),
        det_masks,
        order,
        box_iou: box_iou_m,
        mask_iou: mask_iou_m,
    })
}

/// Convenience wrapper: prepare and match in one call with the default mask
/// binarization threshold.
pub fn match_detections(gt: &GroundTruth, preds: &Predictions, params: &MatchParams) -> Result<MatchResult> {
    Ok(EvalSet::build(gt, preds, DEFAULT_MASK_THRESHOLD)?.match_detections(params))
}

pub fn confusion_matrix(gt: &GroundTruth, preds: &Predictions, iou_threshold: f64) -> Result<ConfusionMatrix> {
    Ok(EvalSet::build(gt, preds, DEFAULT_MASK_THRESHOLD)?.confusion_matrix(
        iou_threshold,
        DEFAULT_MAX_DETECTIONS,
        0.0,
    ))
}

/// `(K+1) x (K+1)` counts; rows are true classes, columns predicted classes,
/// index 0 is background on both axes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub cells: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.cells[truth][predicted]
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        self.cells[truth].iter().sum()
    }
}
