//! Scanline polygon fill.
//!
//! A pixel `(r, c)` is set when its center `(c + 0.5, r + 0.5)` is inside the
//! polygon under the even-odd rule, or lies exactly on one of its edges.

use super::BinaryMask;
use crate::error::{Error, Result};
use crate::geometry::{ImageDims, Point};

/// Exact collinearity and extent test for a point on segment `a`-`b`.
pub fn point_on_segment(p: Point, a: Point, b: Point) -> bool {
    let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    cross == 0.0
        && p.x >= a.x.min(b.x)
        && p.x <= a.x.max(b.x)
        && p.y >= a.y.min(b.y)
        && p.y <= a.y.max(b.y)
}

pub fn polygon_rasterize(vertices: &[Point], dims: ImageDims) -> Result<BinaryMask> {
    if vertices.len() < 3 {
        return Err(Error::DegeneratePolygon(vertices.len()));
    }
    if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::InvalidGeometry("polygon has non-finite vertex".into()));
    }
    let mut mask = BinaryMask::zeros(dims);
    let n = vertices.len();
    let edges = || (0..n).map(move |i| (vertices[i], vertices[(i + n - 1) % n]));
    let width = dims.width as i64;
    let mut xs = Vec::with_capacity(n);

    for row in 0..dims.height {
        let y = row as f64 + 0.5;

        xs.clear();
        for (a, b) in edges() {
            if (a.y > y) != (b.y > y) {
                xs.push((b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x);
            }
        }
        xs.sort_by(f64::total_cmp);
        for span in xs.chunks_exact(2) {
            let (lo, hi) = (span[0], span[1]);
            let first = ((lo - 0.5).floor() as i64).max(0);
            for col in first..width {
                let xc = col as f64 + 0.5;
                if xc >= hi {
                    break;
                }
                if xc >= lo {
                    mask.set(row, col as u32, true);
                }
            }
        }

        // centers lying exactly on an edge
        for (a, b) in edges() {
            if y < a.y.min(b.y) || y > a.y.max(b.y) {
                continue;
            }
            let (lo, hi) = if a.y == b.y {
                (a.x.min(b.x), a.x.max(b.x))
            } else {
                let x = (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x;
                (x - 1.0, x + 1.0)
            };
            let first = ((lo - 0.5).floor() as i64).max(0);
            let last = ((hi - 0.5).ceil() as i64).min(width - 1);
            for col in first..=last {
                let center = Point::new(col as f64 + 0.5, y);
                if point_on_segment(center, a, b) {
                    mask.set(row, col as u32, true);
                }
            }
        }
    }
    Ok(mask)
}
