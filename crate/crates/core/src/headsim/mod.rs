//! Simulator of a two-branch detection head: class scores through a softmax,
//! argmax class selection, and per-class mask grid channels. Also generates
//! synthetic ground truth and predictions with planted mask failures.

mod scenario;

pub use scenario::{
    band_polygon, parse_scenario, synth_scenario, CorruptionMode, CorruptionParams, ScenarioImage,
    ScenarioInstance, ScenarioSpec, BAND_FILL, DEFAULT_GRID_SIDE,
};

use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::error::{Error, Result};
use crate::geometry::box_from_center;
use crate::ingest::{Detection, DetectionMask};
use crate::mask::MaskGrid;

/// Seeded SplitMix64 stream (Steele, Lea and Flood's 64-bit mixer; the state
/// is the seed itself). Floats take the top 53 bits: `(x >> 11) * 2^-53`.
#[derive(Debug, Clone)]
pub struct SimRng(SplitMix64);

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self(SplitMix64::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[-amplitude, amplitude)`.
    pub fn symmetric(&mut self, amplitude: f64) -> f64 {
        (2.0 * self.unit() - 1.0) * amplitude
    }
}

/// One proposal as emitted by the head, before class selection.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDetectorOutput {
    /// `(cx, cy, w, h)`
    pub box_center: [f64; 4],
    /// Sigmoid outputs, index 0 = background, length K+1.
    pub raw_scores: Vec<f64>,
    /// One grid per real class, length K.
    pub mask_grids: Vec<MaskGrid>,
}

impl RawDetectorOutput {
    pub fn num_classes(&self) -> usize {
        self.raw_scores.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.raw_scores.len() < 2 {
            return Err(Error::InvalidScenario("raw scores need background plus one class".into()));
        }
        if self.raw_scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidScenario("raw scores must be finite".into()));
        }
        if self.mask_grids.len() != self.num_classes() {
            return Err(Error::InvalidScenario(format!(
                "{} mask channels for {} classes",
                self.mask_grids.len(),
                self.num_classes()
            )));
        }
        Ok(())
    }
}

/// Softmax over the whole raw vector, background included.
pub fn multiclass_scores(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = raw.iter().map(|&s| (s - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// Index of the first maximum.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Picks the best real class per proposal and attaches its mask channel.
/// A proposal is dropped when background strictly beats every real class.
pub fn finalize_detections(image_id: &str, outputs: &[RawDetectorOutput]) -> Result<Vec<Detection>> {
    let mut out = Vec::with_capacity(outputs.len());
    for o in outputs {
        o.validate()?;
        let probs = multiclass_scores(&o.raw_scores);
        let class = 1 + argmax(&probs[1..]);
        if probs[0] > probs[class] {
            continue;
        }
        let [cx, cy, w, h] = o.box_center;
        out.push(Detection {
            image_id: image_id.to_owned(),
            class_index: class,
            score: probs[class],
            bbox: box_from_center(cx, cy, w, h)?,
            mask: Some(DetectionMask::Grid(o.mask_grids[class - 1].clone())),
        });
    }
    Ok(out)
}
