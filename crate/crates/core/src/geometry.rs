//! Axis-aligned boxes, points and resolution rescaling.
//!
//! Boxes are stored in corner form. The detector head emits center form
//! (`cx, cy, w, h`); [`box_from_center`] and [`BoundingBox::to_center`]
//! convert at the boundary. Coordinates are continuous pixels and are never
//! rounded here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width and height of an image frame in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageDims {
    pub width: u32,
    pub height: u32,
}

impl ImageDims {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidGeometry(format!(
                "image dims must be positive, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// The box covering the whole frame.
    pub fn frame(&self) -> BoundingBox {
        BoundingBox {
            x_min: 0.0,
            y_min: 0.0,
            x_max: self.width as f64,
            y_max: self.height as f64,
        }
    }
}

impl std::fmt::Display for ImageDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !finite || x_min > x_max || y_min > y_max {
            return Err(Error::InvalidGeometry(format!(
                "box ({x_min}, {y_min}, {x_max}, {y_max}) is not ordered and finite"
            )));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Tight bounds of a point set. `None` for an empty slice.
    pub fn enclosing(points: &[Point]) -> Option<Self> {
        let first = points.first()?;
        let mut b = BoundingBox {
            x_min: first.x,
            y_min: first.y,
            x_max: first.x,
            y_max: first.y,
        };
        for p in &points[1..] {
            b.x_min = b.x_min.min(p.x);
            b.y_min = b.y_min.min(p.y);
            b.x_max = b.x_max.max(p.x);
            b.y_max = b.y_max.max(p.y);
        }
        Some(b)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> Point {
        Point::new(
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    /// `(cx, cy, w, h)`, the head's output layout.
    pub fn to_center(&self) -> (f64, f64, f64, f64) {
        let c = self.center();
        (c.x, c.y, self.width(), self.height())
    }

    /// Intersection with `frame`; collapses to a zero-area box on the nearest
    /// frame edge when the two do not overlap.
    pub fn clip_to(&self, frame: &BoundingBox) -> BoundingBox {
        let x_min = self.x_min.clamp(frame.x_min, frame.x_max);
        let y_min = self.y_min.clamp(frame.y_min, frame.y_max);
        BoundingBox {
            x_min,
            y_min,
            x_max: self.x_max.clamp(x_min, frame.x_max),
            y_max: self.y_max.clamp(y_min, frame.y_max),
        }
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

/// Corner-form box from the center form emitted by the box head.
pub fn box_from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<BoundingBox> {
    if !(w >= 0.0 && h >= 0.0) {
        return Err(Error::InvalidGeometry(format!(
            "width and height must be non-negative, got w={w} h={h}"
        )));
    }
    BoundingBox::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
}

/// Intersection over union of two boxes. Two zero-area boxes give 0.
pub fn box_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Geometry that can be mapped between image resolutions by independent
/// per-axis scaling.
pub trait Rescale: Sized {
    fn scaled(&self, sx: f64, sy: f64) -> Self;

    fn rescale(&self, from: ImageDims, to: ImageDims) -> Self {
        let sx = to.width as f64 / from.width as f64;
        let sy = to.height as f64 / from.height as f64;
        self.scaled(sx, sy)
    }
}

impl Rescale for Point {
    fn scaled(&self, sx: f64, sy: f64) -> Self {
        Point::new(self.x * sx, self.y * sy)
    }
}

impl Rescale for BoundingBox {
    fn scaled(&self, sx: f64, sy: f64) -> Self {
        BoundingBox {
            x_min: self.x_min * sx,
            y_min: self.y_min * sy,
            x_max: self.x_max * sx,
            y_max: self.y_max * sy,
        }
    }
}

impl Rescale for Vec<Point> {
    fn scaled(&self, sx: f64, sy: f64) -> Self {
        self.iter().map(|p| p.scaled(sx, sy)).collect()
    }
}

pub fn rescale<G: Rescale>(geometry: &G, from: ImageDims, to: ImageDims) -> G {
    geometry.rescale(from, to)
}
