//! Instance masks: bitmaps, run-length encoding, polygon rasterization,
//! grid extrapolation and shape statistics.

mod grid;
mod raster;
mod rle;
mod shape;

pub use grid::{grid_extrapolate, MaskGrid, DEFAULT_MASK_THRESHOLD};
pub use raster::{point_on_segment, polygon_rasterize};
pub use rle::{rle_decode, rle_encode, rle_iou, RleMask};
pub use shape::{elongation, mask_area, mask_centroid, ShapeStats, VARIANCE_FLOOR};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, ImageDims};

/// A per-pixel binary mask stored row-major, one byte per pixel (0 or 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    dims: ImageDims,
    bits: Vec<u8>,
}

impl BinaryMask {
    pub fn new(dims: ImageDims, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != dims.pixel_count() {
            return Err(Error::DimsMismatch {
                left: format!("{} bits", bits.len()),
                right: format!("{dims} frame"),
            });
        }
        if let Some(v) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidGeometry(format!("mask value {v} is not 0 or 1")));
        }
        Ok(Self { dims, bits })
    }

    pub fn zeros(dims: ImageDims) -> Self {
        Self {
            dims,
            bits: vec![0; dims.pixel_count()],
        }
    }

    pub fn from_fn(dims: ImageDims, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut m = Self::zeros(dims);
        for r in 0..dims.height {
            for c in 0..dims.width {
                if f(r, c) {
                    m.set(r, c, true);
                }
            }
        }
        m
    }

    pub fn dims(&self) -> ImageDims {
        self.dims
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    fn index(&self, row: u32, col: u32) -> usize {
        row as usize * self.dims.width as usize + col as usize
    }

    pub fn get(&self, row: u32, col: u32) -> bool {
        self.bits[self.index(row, col)] == 1
    }

    pub fn set(&mut self, row: u32, col: u32, value: bool) {
        let i = self.index(row, col);
        self.bits[i] = value as u8;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.contains(&1)
    }

    /// `(row, col)` of every set pixel in row-major order.
    pub fn set_pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.dims.width as usize;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(move |(i, _)| ((i / w) as u32, (i % w) as u32))
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims == other.dims
            && self
                .bits
                .iter()
                .zip(&other.bits)
                .all(|(&a, &b)| a <= b)
    }

    /// Tight pixel bounds of the set region, `None` when empty.
    pub fn bounds(&self) -> Option<BoundingBox> {
        let mut it = self.set_pixels();
        let (r0, c0) = it.next()?;
        let (mut rmin, mut rmax, mut cmin, mut cmax) = (r0, r0, c0, c0);
        for (r, c) in it {
            rmin = rmin.min(r);
            rmax = rmax.max(r);
            cmin = cmin.min(c);
            cmax = cmax.max(c);
        }
        Some(BoundingBox {
            x_min: cmin as f64,
            y_min: rmin as f64,
            x_max: cmax as f64 + 1.0,
            y_max: rmax as f64 + 1.0,
        })
    }

    pub(crate) fn check_same_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimsMismatch {
                left: self.dims.to_string(),
                right: other.dims.to_string(),
            });
        }
        Ok(())
    }
}

/// `|a ∧ b| / |a ∨ b|`, 0 when both masks are empty.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.check_same_dims(b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        inter += (x & y) as usize;
        union += (x | y) as usize;
    }
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}
