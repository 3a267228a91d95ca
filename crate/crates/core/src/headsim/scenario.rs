use serde::{Deserialize, Serialize};

use super::{finalize_detections, RawDetectorOutput, SimRng};
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, ImageDims, Point};
use crate::ingest::schema::{GtDocument, GtImageDoc, GtInstanceDoc, PredDocument};
use crate::ingest::{predictions_to_doc, ClassTable, PredImage, Predictions};
use crate::mask::MaskGrid;

pub const DEFAULT_GRID_SIDE: usize = 33;
/// Fraction of its box covered by the default band shape.
pub const BAND_FILL: f64 = 0.4;
/// Sub-samples per grid-cell axis when measuring polygon coverage.
const SUPERSAMPLE: usize = 8;
/// Raw sigmoid outputs given to the instance class and to every other slot.
const RAW_HIT: f64 = 0.99;
const RAW_MISS: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptionMode {
    #[default]
    None,
    Partial,
    Shifted,
    Oversized,
    Noisy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionParams {
    /// Share of grid columns erased, as one central block.
    pub partial_fraction: f64,
    /// Translation of mask content as a share of box width and height.
    pub shift_fraction: f64,
    /// Half-width of the uniform per-cell perturbation.
    pub noise_amplitude: f64,
}

impl Default for CorruptionParams {
    fn default() -> Self {
        Self {
            partial_fraction: 0.6,
            shift_fraction: 0.35,
            noise_amplitude: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioInstance {
    pub class: String,
    /// True outline; when absent, `box` is filled with the default band shape.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygon: Option<Vec<[f64; 2]>>,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
    /// Each predicted box edge moves by up to this share of the box size.
    #[serde(default)]
    pub box_jitter: f64,
    #[serde(default)]
    pub mode: CorruptionMode,
    #[serde(default = "default_score")]
    pub score: f64,
}

fn default_score() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioImage {
    pub id: String,
    #[serde(default)]
    pub instances: Vec<ScenarioInstance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub image_dims: ImageDims,
    /// Defaults to the twelve road classes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<String>>,
    pub seed: u64,
    #[serde(default = "default_side")]
    pub grid_side: usize,
    #[serde(default)]
    pub params: CorruptionParams,
    pub images: Vec<ScenarioImage>,
}

fn default_side() -> usize {
    DEFAULT_GRID_SIDE
}

pub fn parse_scenario(text: &str) -> Result<ScenarioSpec> {
    Ok(serde_json::from_str(text)?)
}

/// Slanted band from the bottom-left to the top-right corner of `b`,
/// covering `fill` of the box area.
pub fn band_polygon(b: &BoundingBox, fill: f64) -> Vec<Point> {
    let (w, t) = (b.width(), fill);
    vec![
        Point::new(b.x_min, b.y_max),
        Point::new(b.x_min + t * w, b.y_max),
        Point::new(b.x_max, b.y_min),
        Point::new(b.x_max - t * w, b.y_min),
    ]
}

/// Six well-separated box slots on a 960x540 frame.
const SLOTS: [[f64; 4]; 6] = [
    [40.0, 40.0, 280.0, 200.0],
    [360.0, 40.0, 600.0, 200.0],
    [680.0, 40.0, 920.0, 200.0],
    [40.0, 320.0, 280.0, 480.0],
    [360.0, 320.0, 600.0, 480.0],
    [680.0, 320.0, 920.0, 480.0],
];

fn slot_instance(class: &str, slot: usize, mode: CorruptionMode) -> ScenarioInstance {
    ScenarioInstance {
        class: class.to_owned(),
        polygon: None,
        bbox: Some(SLOTS[slot]),
        box_jitter: 0.0,
        mode,
        score: default_score(),
    }
}

impl ScenarioSpec {
    fn on_road_frame(seed: u64, images: Vec<ScenarioImage>) -> Self {
        Self {
            image_dims: ImageDims::new(960, 540).expect("fixed frame"),
            classes: None,
            seed,
            grid_side: DEFAULT_GRID_SIDE,
            params: CorruptionParams::default(),
            images,
        }
    }

    /// Every road class once, one instance per image (so even AR@1 can
    /// reach 1), no jitter or corruption.
    pub fn perfect(seed: u64) -> Self {
        let images = crate::ingest::ROAD_CLASSES
            .iter()
            .enumerate()
            .map(|(i, c)| ScenarioImage {
                id: format!("clean_{i:02}"),
                instances: vec![slot_instance(c, i % SLOTS.len(), CorruptionMode::None)],
            })
            .collect();
        Self::on_road_frame(seed, images)
    }

    /// One instance per failure-producing corruption plus clean instances.
    pub fn planted(seed: u64) -> Self {
        let instances = vec![
            slot_instance("Crack1", 0, CorruptionMode::Partial),
            slot_instance("Joint", 1, CorruptionMode::Shifted),
            slot_instance("Filling", 2, CorruptionMode::Oversized),
            slot_instance("Manhole", 3, CorruptionMode::None),
            slot_instance("Pothole", 4, CorruptionMode::None),
            slot_instance("Marking", 5, CorruptionMode::None),
        ];
        Self::on_road_frame(
            seed,
            vec![ScenarioImage {
                id: "planted".into(),
                instances,
            }],
        )
    }
}

fn invalid(image: &str, record: usize, msg: impl std::fmt::Display) -> Error {
    Error::InvalidScenario(format!("image {image}, instance {record}: {msg}"))
}

fn inside(poly: &[Point], x: f64, y: f64) -> bool {
    let mut hit = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x {
            hit = !hit;
        }
        j = i;
    }
    hit
}

/// Share of each grid cell over `b` that lies inside `poly` translated by
/// `(dx, dy)`.
fn coverage_grid(poly: &[Point], b: &BoundingBox, side: usize, dx: f64, dy: f64) -> Vec<f64> {
    let (cw, ch) = (b.width() / side as f64, b.height() / side as f64);
    let n = SUPERSAMPLE;
    let mut values = Vec::with_capacity(side * side);
    for row in 0..side {
        for col in 0..side {
            let mut hits = 0;
            for sy in 0..n {
                for sx in 0..n {
                    let x = b.x_min + (col as f64 + (sx as f64 + 0.5) / n as f64) * cw - dx;
                    let y = b.y_min + (row as f64 + (sy as f64 + 0.5) / n as f64) * ch - dy;
                    hits += inside(poly, x, y) as usize;
                }
            }
            values.push(hits as f64 / (n * n) as f64);
        }
    }
    values
}

fn corrupted_grid(
    poly: &[Point],
    pred: &BoundingBox,
    side: usize,
    mode: CorruptionMode,
    params: &CorruptionParams,
    rng: &mut SimRng,
) -> Result<MaskGrid> {
    let values = match mode {
        CorruptionMode::None => coverage_grid(poly, pred, side, 0.0, 0.0),
        CorruptionMode::Shifted => coverage_grid(
            poly,
            pred,
            side,
            params.shift_fraction * pred.width(),
            params.shift_fraction * pred.height(),
        ),
        CorruptionMode::Oversized => vec![1.0; side * side],
        CorruptionMode::Partial => {
            let mut v = coverage_grid(poly, pred, side, 0.0, 0.0);
            let erase = (params.partial_fraction * side as f64).round() as usize;
            let start = (side - erase.min(side)) / 2;
            for row in 0..side {
                for col in start..start + erase.min(side) {
                    v[row * side + col] = 0.0;
                }
            }
            v
        }
        CorruptionMode::Noisy => coverage_grid(poly, pred, side, 0.0, 0.0)
            .into_iter()
            .map(|x| (x + rng.symmetric(params.noise_amplitude)).clamp(0.0, 1.0))
            .collect(),
    };
    MaskGrid::new(side, values)
}

/// Ground truth from the true outlines, and predictions whose boxes and mask
/// grids are derived from them with the requested jitter and corruption.
/// Fully determined by the spec, seed included.
///
/// Each proposal goes through [`finalize_detections`] for class and mask
/// channel selection; its score is then set to the spec score, since a
/// softmax over sigmoid outputs cannot exceed `e / (e + K)`.
pub fn synth_scenario(spec: &ScenarioSpec) -> Result<(GtDocument, PredDocument)> {
    let classes = match &spec.classes {
        Some(names) => ClassTable::new(names)?,
        None => ClassTable::road(),
    };
    let k = classes.num_classes();
    let dims = spec.image_dims;
    let frame = dims.frame();
    if spec.grid_side == 0 {
        return Err(Error::InvalidScenario("grid side must be at least 1".into()));
    }
    let p = &spec.params;
    if !(0.0..=1.0).contains(&p.partial_fraction)
        || !(0.0..=1.0).contains(&p.shift_fraction)
        || !(0.0..=1.0).contains(&p.noise_amplitude)
    {
        return Err(Error::InvalidScenario("corruption parameters must lie in [0, 1]".into()));
    }

    let mut rng = SimRng::new(spec.seed);
    let mut gt_images = Vec::with_capacity(spec.images.len());
    let mut pred_images = Vec::with_capacity(spec.images.len());
    for image in &spec.images {
        let mut gt_instances = Vec::new();
        let mut outputs = Vec::new();
        let mut scores = Vec::new();
        for (i, inst) in image.instances.iter().enumerate() {
            let class = classes
                .index_of(&inst.class)
                .ok_or_else(|| invalid(&image.id, i, format!("unknown class {:?}", inst.class)))?;
            let poly: Vec<Point> = match (&inst.polygon, &inst.bbox) {
                (Some(p), _) => p.iter().map(|&[x, y]| Point::new(x, y)).collect(),
                (None, Some([a, b, c, d])) => {
                    let bx = BoundingBox::new(*a, *b, *c, *d).map_err(|e| invalid(&image.id, i, e))?;
                    band_polygon(&bx, BAND_FILL)
                }
                (None, None) => return Err(invalid(&image.id, i, "needs a polygon or a box")),
            };
            if poly.len() < 3 {
                return Err(invalid(&image.id, i, "polygon needs at least 3 vertices"));
            }
            if poly
                .iter()
                .any(|v| !v.x.is_finite() || !v.y.is_finite() || v.x < 0.0 || v.y < 0.0 || v.x > frame.x_max || v.y > frame.y_max)
            {
                return Err(invalid(&image.id, i, format!("geometry leaves the {dims} frame")));
            }
            if !(0.0..0.5).contains(&inst.box_jitter) {
                return Err(invalid(&image.id, i, "box jitter must lie in [0, 0.5)"));
            }
            if !(0.0..=1.0).contains(&inst.score) {
                return Err(invalid(&image.id, i, "score must lie in [0, 1]"));
            }
            let truth = BoundingBox::enclosing(&poly).expect("non-empty polygon");
            if truth.area() <= 0.0 {
                return Err(invalid(&image.id, i, "polygon has zero-area extent"));
            }

            let (w, h) = (truth.width(), truth.height());
            let j = inst.box_jitter;
            let d = [rng.symmetric(j) * w, rng.symmetric(j) * h, rng.symmetric(j) * w, rng.symmetric(j) * h];
            let pred = BoundingBox::new(
                (truth.x_min + d[0]).max(0.0),
                (truth.y_min + d[1]).max(0.0),
                (truth.x_max + d[2]).min(frame.x_max),
                (truth.y_max + d[3]).min(frame.y_max),
            )
            .map_err(|e| invalid(&image.id, i, e))?;

            let grid = corrupted_grid(&poly, &pred, spec.grid_side, inst.mode, p, &mut rng)?;
            let blank = MaskGrid::filled(spec.grid_side, 0.0)?;
            let mut mask_grids = vec![blank; k];
            mask_grids[class - 1] = grid;
            let mut raw_scores = vec![RAW_MISS; k + 1];
            raw_scores[class] = RAW_HIT;
            let (cx, cy, bw, bh) = pred.to_center();
            outputs.push(RawDetectorOutput {
                box_center: [cx, cy, bw, bh],
                raw_scores,
                mask_grids,
            });
            scores.push(inst.score);

            gt_instances.push(GtInstanceDoc {
                class: inst.class.clone(),
                polygon: Some(poly.iter().map(|v| [v.x, v.y]).collect()),
                rle: None,
                bbox: None,
            });
        }
        let mut detections = finalize_detections(&image.id, &outputs)?;
        for (det, score) in detections.iter_mut().zip(scores) {
            det.score = score;
        }
        gt_images.push(GtImageDoc {
            id: image.id.clone(),
            instances: gt_instances,
        });
        pred_images.push(PredImage {
            id: image.id.clone(),
            detections,
        });
    }

    let gt = GtDocument {
        image_dims: dims,
        classes: classes.real_names().to_vec(),
        images: gt_images,
    };
    let preds = predictions_to_doc(&Predictions {
        dims: Some(dims),
        images: pred_images,
    });
    Ok((gt, preds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ground_truth_from_doc, predictions_from_doc};
    use crate::matching::{EvalSet, IouKind, MatchParams};

    fn mask_ious(spec: &ScenarioSpec) -> Vec<f64> {
        let (g, p) = synth_scenario(spec).unwrap();
        let gt = ground_truth_from_doc(&g).unwrap();
        let preds = predictions_from_doc(&p).unwrap();
        let set = EvalSet::build(&gt, &preds, 0.5).unwrap();
        let r = set.match_detections(&MatchParams::new(IouKind::Box));
        r.images
            .iter()
            .zip(&set.scenes)
            .flat_map(|(m, s)| m.entries.iter().map(|e| s.mask_iou(e.det, e.gt.unwrap())).collect::<Vec<_>>())
            .collect()
    }

    #[test]
    fn clean_round_trip_is_tight() {
        for side in [15, 33] {
            let mut spec = ScenarioSpec::perfect(1);
            spec.grid_side = side;
            for iou in mask_ious(&spec) {
                assert!(iou >= 0.95, "side {side}: {iou}");
            }
        }
    }

    #[test]
    fn corruptions_break_masks() {
        let spec = ScenarioSpec::planted(3);
        let ious = mask_ious(&spec);
        assert!(ious[..3].iter().all(|&v| v < 0.5), "{ious:?}");
        assert!(ious[3..].iter().all(|&v| v >= 0.95), "{ious:?}");
    }

    #[test]
    fn deterministic_documents() {
        let mut spec = ScenarioSpec::planted(11);
        spec.images[0].instances[4].mode = CorruptionMode::Noisy;
        spec.images[0].instances[5].box_jitter = 0.05;
        let a = synth_scenario(&spec).unwrap();
        let b = synth_scenario(&spec).unwrap();
        assert_eq!(serde_json::to_string(&a.1).unwrap(), serde_json::to_string(&b.1).unwrap());
        assert_eq!(a, b);
        spec.seed = 12;
        assert_ne!(synth_scenario(&spec).unwrap().1, a.1);
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = ScenarioSpec::planted(5);
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(parse_scenario(&text).unwrap(), spec);
        let minimal = r#"{"image_dims": {"width": 100, "height": 80}, "seed": 1,
            "images": [{"id": "a", "instances": [{"class": "Stain", "box": [10, 10, 60, 50], "mode": "partial"}]}]}"#;
        let s = parse_scenario(minimal).unwrap();
        assert_eq!(s.grid_side, 33);
        assert_eq!(s.images[0].instances[0].score, 0.9);
        assert!(synth_scenario(&s).is_ok());
    }

    #[test]
    fn outside_frame_rejected() {
        let mut spec = ScenarioSpec::planted(1);
        spec.images[0].instances[0].bbox = Some([900.0, 10.0, 1000.0, 50.0]);
        assert!(matches!(synth_scenario(&spec), Err(Error::InvalidScenario(_))));
        let mut spec = ScenarioSpec::planted(1);
        spec.images[0].instances[0].class = "Graffiti".into();
        assert!(synth_scenario(&spec).is_err());
    }
}
