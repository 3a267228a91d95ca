//! Ground-truth and prediction documents: parsing, validation, serialization,
//! annotation-tool conversion and dataset summaries.
//!
//! Parsing never stops at the first problem; every invalid record is
//! reported with its image id and record index.

mod classes;
mod dataset;
pub mod schema;
mod vott;

use std::collections::HashSet;

pub use classes::{ClassTable, BACKGROUND, ROAD_CLASSES};
pub use dataset::{validate_dataset, DatasetSummary, Split};
pub use vott::convert_vott;

use crate::error::{Error, IngestErrors, IngestIssue, Result};
use crate::geometry::{BoundingBox, ImageDims, Point};
use crate::mask::{polygon_rasterize, rle_encode, MaskGrid, RleMask};
use schema::{DetectionDoc, GridDoc, GtDocument, GtImageDoc, GtInstanceDoc, PredDocument, PredImageDoc, RleDoc};

/// Polygon vertices may overshoot the frame by this many pixels before
/// clamping; beyond it the record is rejected.
pub const FRAME_TOLERANCE: f64 = 1.0;

/// Maximum per-edge disagreement between a stored box and the box derived
/// from the instance geometry.
pub const BOX_TOLERANCE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthInstance {
    pub image_id: String,
    pub class_index: usize,
    pub polygon: Option<Vec<Point>>,
    pub mask: Option<RleMask>,
    pub bbox: BoundingBox,
}

impl GroundTruthInstance {
    /// The instance mask: the stored encoding, else the rasterized polygon.
    pub fn rle(&self, dims: ImageDims) -> Result<RleMask> {
        match (&self.mask, &self.polygon) {
            (Some(m), _) => Ok(m.clone()),
            (None, Some(p)) => Ok(rle_encode(&polygon_rasterize(p, dims)?)),
            (None, None) => Err(Error::InvalidGeometry("instance has no polygon or mask".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtImage {
    pub id: String,
    pub instances: Vec<GroundTruthInstance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub dims: ImageDims,
    pub classes: ClassTable,
    pub images: Vec<GtImage>,
}

impl GroundTruth {
    pub fn instance_count(&self) -> usize {
        self.images.iter().map(|i| i.instances.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DetectionMask {
    Grid(MaskGrid),
    Rle(RleMask),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: String,
    pub class_index: usize,
    pub score: f64,
    pub bbox: BoundingBox,
    pub mask: Option<DetectionMask>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredImage {
    pub id: String,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Predictions {
    pub dims: Option<ImageDims>,
    pub images: Vec<PredImage>,
}

impl Predictions {
    pub fn detection_count(&self) -> usize {
        self.images.iter().map(|i| i.detections.len()).sum()
    }
}

fn json_issue(e: serde_json::Error) -> IngestErrors {
    IngestIssue::document(format!("malformed document: {e}")).into()
}

fn finish<T>(value: T, issues: Vec<IngestIssue>) -> Result<T> {
    if issues.is_empty() {
        Ok(value)
    } else {
        Err(Error::Ingest(IngestErrors(issues)))
    }
}

fn rle_from_doc(doc: &RleDoc) -> Result<RleMask> {
    let dims = ImageDims::new(doc.dims.width, doc.dims.height)?;
    RleMask::new(dims, doc.counts.clone())
}

fn rle_to_doc(rle: &RleMask) -> RleDoc {
    RleDoc {
        counts: rle.counts().to_vec(),
        dims: rle.dims(),
    }
}

pub fn parse_ground_truth(text: &str) -> Result<GroundTruth> {
    let doc: GtDocument = serde_json::from_str(text).map_err(json_issue)?;
    ground_truth_from_doc(&doc)
}

pub fn ground_truth_from_doc(doc: &GtDocument) -> Result<GroundTruth> {
    let mut issues = Vec::new();
    let dims = ImageDims::new(doc.image_dims.width, doc.image_dims.height)
        .map_err(|e| IngestErrors::from(IngestIssue::document(e.to_string())))?;
    let classes = ClassTable::new(&doc.classes)
        .map_err(|e| IngestErrors::from(IngestIssue::document(e.to_string())))?;

    let mut seen = HashSet::new();
    let mut images = Vec::with_capacity(doc.images.len());
    for image in &doc.images {
        if !seen.insert(image.id.as_str()) {
            issues.push(IngestIssue::new(Some(&image.id), None, "duplicate image id"));
            continue;
        }
        let mut instances = Vec::with_capacity(image.instances.len());
        for (record, inst) in image.instances.iter().enumerate() {
            match instance_from_doc(inst, &image.id, dims, &classes) {
                Ok(i) => instances.push(i),
                Err(msg) => issues.push(IngestIssue::new(Some(&image.id), Some(record), msg)),
            }
        }
        images.push(GtImage {
            id: image.id.clone(),
            instances,
        });
    }
    finish(GroundTruth { dims, classes, images }, issues)
}

fn instance_from_doc(
    inst: &GtInstanceDoc,
    image_id: &str,
    dims: ImageDims,
    classes: &ClassTable,
) -> std::result::Result<GroundTruthInstance, String> {
    let class_index = classes
        .index_of(&inst.class)
        .ok_or_else(|| format!("unknown class {:?}", inst.class))?;

    let polygon = match &inst.polygon {
        None => None,
        Some(raw) => {
            if raw.len() < 3 {
                return Err(format!("polygon has {} vertices, need at least 3", raw.len()));
            }
            let (w, h) = (dims.width as f64, dims.height as f64);
            let mut pts = Vec::with_capacity(raw.len());
            for &[x, y] in raw {
                if !x.is_finite() || !y.is_finite() {
                    return Err("polygon has a non-finite vertex".into());
                }
                let outside = x < -FRAME_TOLERANCE
                    || y < -FRAME_TOLERANCE
                    || x > w + FRAME_TOLERANCE
                    || y > h + FRAME_TOLERANCE;
                if outside {
                    return Err(format!("polygon vertex ({x}, {y}) outside the {dims} frame"));
                }
                pts.push(Point::new(x.clamp(0.0, w), y.clamp(0.0, h)));
            }
            Some(pts)
        }
    };
    let mask = match &inst.rle {
        None => None,
        Some(doc) => {
            let rle = rle_from_doc(doc).map_err(|e| e.to_string())?;
            if rle.dims() != dims {
                return Err(format!("mask dims {} differ from frame {dims}", rle.dims()));
            }
            Some(rle)
        }
    };

    let derived = match (&polygon, &mask) {
        (Some(p), _) => BoundingBox::enclosing(p),
        (None, Some(m)) => crate::mask::rle_decode(m).bounds(),
        (None, None) => return Err("instance needs a polygon or an rle mask".into()),
    }
    .ok_or("instance mask is empty")?;

    if let Some(stored) = inst.bbox {
        let off = stored
            .iter()
            .zip(derived.as_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if off > BOX_TOLERANCE {
            return Err(format!(
                "stored box {stored:?} disagrees with geometry bounds {:?}",
                derived.as_array()
            ));
        }
    }

    Ok(GroundTruthInstance {
        image_id: image_id.to_owned(),
        class_index,
        polygon,
        mask,
        bbox: derived,
    })
}

pub fn ground_truth_to_doc(gt: &GroundTruth) -> GtDocument {
    GtDocument {
        image_dims: gt.dims,
        classes: gt.classes.real_names().to_vec(),
        images: gt
            .images
            .iter()
            .map(|img| GtImageDoc {
                id: img.id.clone(),
                instances: img
                    .instances
                    .iter()
                    .map(|inst| GtInstanceDoc {
                        class: gt.classes.name(inst.class_index).unwrap_or_default().to_owned(),
                        polygon: inst
                            .polygon
                            .as_ref()
                            .map(|p| p.iter().map(|q| [q.x, q.y]).collect()),
                        rle: inst.mask.as_ref().map(rle_to_doc),
                        bbox: Some(inst.bbox.as_array()),
                    })
                    .collect(),
            })
            .collect(),
    }
}

pub fn serialize_ground_truth(gt: &GroundTruth) -> String {
    to_json(&ground_truth_to_doc(gt))
}

pub fn parse_predictions(text: &str) -> Result<Predictions> {
    let doc: PredDocument = serde_json::from_str(text).map_err(json_issue)?;
    predictions_from_doc(&doc)
}

pub fn predictions_from_doc(doc: &PredDocument) -> Result<Predictions> {
    let mut issues = Vec::new();
    let dims = match doc.image_dims {
        Some(d) => Some(
            ImageDims::new(d.width, d.height)
                .map_err(|e| IngestErrors::from(IngestIssue::document(e.to_string())))?,
        ),
        None => None,
    };
    let mut seen = HashSet::new();
    let mut images = Vec::with_capacity(doc.images.len());
    for image in &doc.images {
        if !seen.insert(image.id.as_str()) {
            issues.push(IngestIssue::new(Some(&image.id), None, "duplicate image id"));
            continue;
        }
        if image.num_detections != image.detections.len() {
            issues.push(IngestIssue::new(
                Some(&image.id),
                None,
                format!(
                    "num_detections is {} but {} detections are listed",
                    image.num_detections,
                    image.detections.len()
                ),
            ));
        }
        let mut detections = Vec::with_capacity(image.detections.len());
        for (record, det) in image.detections.iter().enumerate() {
            match detection_from_doc(det, &image.id, dims) {
                Ok(d) => detections.push(d),
                Err(msg) => issues.push(IngestIssue::new(Some(&image.id), Some(record), msg)),
            }
        }
        images.push(PredImage {
            id: image.id.clone(),
            detections,
        });
    }
    finish(Predictions { dims, images }, issues)
}

fn detection_from_doc(
    det: &DetectionDoc,
    image_id: &str,
    dims: Option<ImageDims>,
) -> std::result::Result<Detection, String> {
    if det.class_index == 0 {
        return Err("class index 0 is background and cannot be a final detection".into());
    }
    if !(0.0..=1.0).contains(&det.score) {
        return Err(format!("score {} outside [0, 1]", det.score));
    }
    let [x0, y0, x1, y1] = det.bbox;
    let bbox = BoundingBox::new(x0, y0, x1, y1).map_err(|e| e.to_string())?;
    let mask = match (&det.mask_grid, &det.rle) {
        (Some(_), Some(_)) => return Err("detection carries both mask_grid and rle".into()),
        (Some(g), None) => Some(DetectionMask::Grid(
            MaskGrid::new(g.side, g.values.clone()).map_err(|e| e.to_string())?,
        )),
        (None, Some(r)) => {
            let rle = rle_from_doc(r).map_err(|e| e.to_string())?;
            if let Some(d) = dims {
                if rle.dims() != d {
                    return Err(format!("mask dims {} differ from frame {d}", rle.dims()));
                }
            }
            Some(DetectionMask::Rle(rle))
        }
        (None, None) => None,
    };
    Ok(Detection {
        image_id: image_id.to_owned(),
        class_index: det.class_index,
        score: det.score,
        bbox,
        mask,
    })
}

pub fn predictions_to_doc(preds: &Predictions) -> PredDocument {
    PredDocument {
        image_dims: preds.dims,
        images: preds
            .images
            .iter()
            .map(|img| PredImageDoc {
                id: img.id.clone(),
                num_detections: img.detections.len(),
                detections: img
                    .detections
                    .iter()
                    .map(|d| DetectionDoc {
                        class_index: d.class_index,
                        score: d.score,
                        bbox: d.bbox.as_array(),
                        mask_grid: match &d.mask {
                            Some(DetectionMask::Grid(g)) => Some(GridDoc {
                                side: g.side(),
                                values: g.values().to_vec(),
                            }),
                            _ => None,
                        },
                        rle: match &d.mask {
                            Some(DetectionMask::Rle(r)) => Some(rle_to_doc(r)),
                            _ => None,
                        },
                    })
                    .collect(),
            })
            .collect(),
    }
}

pub fn serialize_predictions(preds: &Predictions) -> String {
    to_json(&predictions_to_doc(preds))
}

pub(crate) fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents always serialize");
    s.push('\n');
    s
}
