//! Conversion from tagging-tool exports to the ground-truth schema.
//!
//! Accepts either a single asset record (`{"asset": ..., "regions": [...]}`)
//! or a project export holding many (`{"assets": {"<id>": record, ...}}`).
//! Only asset size, region tags and region geometry are read.

use std::collections::BTreeMap;

use serde::Deserialize;

use super::schema::{GtDocument, GtImageDoc, GtInstanceDoc};
use super::ClassTable;
use crate::error::{Error, IngestErrors, IngestIssue, Result};
use crate::geometry::{ImageDims, Point, Rescale};

#[derive(Deserialize)]
struct Export {
    #[serde(default)]
    assets: Option<BTreeMap<String, AssetRecord>>,
    #[serde(default)]
    asset: Option<Asset>,
    #[serde(default)]
    regions: Vec<Region>,
}

#[derive(Deserialize)]
struct AssetRecord {
    asset: Asset,
    #[serde(default)]
    regions: Vec<Region>,
}

#[derive(Deserialize)]
struct Asset {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    size: Option<Size>,
}

#[derive(Deserialize)]
struct Size {
    width: u32,
    height: u32,
}

#[derive(Deserialize)]
struct Region {
    #[serde(default)]
    tags: Vec<String>,
    #[serde(default)]
    points: Vec<XY>,
    #[serde(rename = "boundingBox", default)]
    bounding_box: Option<Rect>,
}

#[derive(Deserialize)]
struct XY {
    x: f64,
    y: f64,
}

#[derive(Deserialize)]
struct Rect {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
}

/// Rescales every region to `target` and maps tags through `classes`.
pub fn convert_vott(text: &str, target: ImageDims, classes: &ClassTable) -> Result<GtDocument> {
    let export: Export = serde_json::from_str(text)
        .map_err(|e| IngestErrors::from(IngestIssue::document(format!("malformed export: {e}"))))?;

    let records: Vec<(String, Asset, Vec<Region>)> = match (export.assets, export.asset) {
        (Some(map), _) => map
            .into_iter()
            .map(|(key, rec)| (key, rec.asset, rec.regions))
            .collect(),
        (None, Some(asset)) => vec![(String::new(), asset, export.regions)],
        (None, None) => {
            return Err(Error::Ingest(
                IngestIssue::document("export has neither \"asset\" nor \"assets\"").into(),
            ))
        }
    };

    let mut issues = Vec::new();
    let mut images = Vec::with_capacity(records.len());
    for (key, asset, regions) in records {
        let id = asset.name.or(asset.id).unwrap_or(key);
        let Some(size) = asset.size else {
            issues.push(IngestIssue::new(Some(&id), None, "missing source image size"));
            continue;
        };
        let source = match ImageDims::new(size.width, size.height) {
            Ok(d) => d,
            Err(e) => {
                issues.push(IngestIssue::new(Some(&id), None, e.to_string()));
                continue;
            }
        };
        let mut instances = Vec::with_capacity(regions.len());
        for (record, region) in regions.iter().enumerate() {
            let Some(class) = region.tags.iter().find(|t| classes.index_of(t).is_some()) else {
                issues.push(IngestIssue::new(
                    Some(&id),
                    Some(record),
                    format!("no tag in {:?} maps to a known class", region.tags),
                ));
                continue;
            };
            let points: Vec<Point> = if region.points.len() >= 3 {
                region.points.iter().map(|p| Point::new(p.x, p.y)).collect()
            } else if let Some(r) = &region.bounding_box {
                vec![
                    Point::new(r.left, r.top),
                    Point::new(r.left + r.width, r.top),
                    Point::new(r.left + r.width, r.top + r.height),
                    Point::new(r.left, r.top + r.height),
                ]
            } else {
                issues.push(IngestIssue::new(Some(&id), Some(record), "region has no usable geometry"));
                continue;
            };
            let scaled = points.rescale(source, target);
            instances.push(GtInstanceDoc {
                class: class.clone(),
                polygon: Some(scaled.iter().map(|p| [p.x, p.y]).collect()),
                rle: None,
                bbox: None,
            });
        }
        images.push(GtImageDoc { id, instances });
    }

    if !issues.is_empty() {
        return Err(Error::Ingest(IngestErrors(issues)));
    }
    Ok(GtDocument {
        image_dims: target,
        classes: classes.real_names().to_vec(),
        images,
    })
}
