//! Serde mirrors of the on-disk JSON documents. Unknown fields are ignored.

use serde::{Deserialize, Deserializer, Serialize};

use crate::geometry::ImageDims;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtDocument {
    pub image_dims: ImageDims,
    pub classes: Vec<String>,
    #[serde(default)]
    pub images: Vec<GtImageDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtImageDoc {
    #[serde(deserialize_with = "image_id")]
    pub id: String,
    #[serde(default)]
    pub instances: Vec<GtInstanceDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtInstanceDoc {
    pub class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygon: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rle: Option<RleDoc>,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RleDoc {
    pub counts: Vec<u32>,
    pub dims: ImageDims,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_dims: Option<ImageDims>,
    #[serde(default)]
    pub images: Vec<PredImageDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredImageDoc {
    #[serde(deserialize_with = "image_id")]
    pub id: String,
    pub num_detections: usize,
    #[serde(default)]
    pub detections: Vec<DetectionDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionDoc {
    pub class_index: usize,
    pub score: f64,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_grid: Option<GridDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rle: Option<RleDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDoc {
    pub side: usize,
    pub values: Vec<f64>,
}

/// Image ids may be written as strings or integers; both become strings.
fn image_id<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        Text(String),
        Int(u64),
        Signed(i64),
    }
    Ok(match Id::deserialize(d)? {
        Id::Text(s) => s,
        Id::Int(n) => n.to_string(),
        Id::Signed(n) => n.to_string(),
    })
}
