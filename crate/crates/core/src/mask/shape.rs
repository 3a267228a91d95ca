use super::{BinaryMask, RleMask};
use crate::error::{Error, Result};
use crate::geometry::Point;

/// Lower bound on each covariance eigenvalue: the variance of pixel centers
/// across a single pixel row.
pub const VARIANCE_FLOOR: f64 = 1.0 / 12.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeStats {
    pub area: usize,
    pub centroid: Point,
    pub elongation: f64,
}

impl ShapeStats {
    pub fn of(mask: &BinaryMask) -> Result<Self> {
        let (centroid, cov) = moments(mask)?;
        Ok(Self {
            area: mask.count(),
            centroid,
            elongation: elongation_from_cov(cov),
        })
    }

    /// Same statistics computed from the column runs without decoding.
    pub fn of_rle(mask: &RleMask) -> Result<Self> {
        let h = mask.dims().height as u64;
        // (column, mean row center, length) per within-column segment
        let mut segments = Vec::new();
        for (start, end) in mask.runs() {
            let mut at = start;
            while at < end {
                let col = at / h;
                let stop = end.min((col + 1) * h);
                let (r0, r1) = (at - col * h, stop - col * h);
                segments.push((col as f64 + 0.5, (r0 + r1) as f64 / 2.0, (r1 - r0) as f64));
                at = stop;
            }
        }
        let n: f64 = segments.iter().map(|s| s.2).sum();
        if n == 0.0 {
            return Err(Error::EmptyMask);
        }
        let mx = segments.iter().map(|s| s.0 * s.2).sum::<f64>() / n;
        let my = segments.iter().map(|s| s.1 * s.2).sum::<f64>() / n;
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for &(x, y, len) in &segments {
            let (dx, dy) = (x - mx, y - my);
            sxx += len * dx * dx;
            syy += len * (dy * dy + (len * len - 1.0) / 12.0);
            sxy += len * dx * dy;
        }
        Ok(Self {
            area: n as usize,
            centroid: Point::new(mx, my),
            elongation: elongation_from_cov([sxx / n, syy / n, sxy / n]),
        })
    }
}

pub fn mask_area(mask: &BinaryMask) -> usize {
    mask.count()
}

/// Mean of set-pixel centers.
pub fn mask_centroid(mask: &BinaryMask) -> Result<Point> {
    moments(mask).map(|(c, _)| c)
}

/// `sqrt(λmax / λmin)` of the pixel-center covariance, both eigenvalues
/// floored at [`VARIANCE_FLOOR`]. Always ≥ 1.
pub fn elongation(mask: &BinaryMask) -> Result<f64> {
    moments(mask).map(|(_, cov)| elongation_from_cov(cov))
}

fn moments(mask: &BinaryMask) -> Result<(Point, [f64; 3])> {
    let mut n = 0.0;
    let (mut sx, mut sy) = (0.0, 0.0);
    for (r, c) in mask.set_pixels() {
        n += 1.0;
        sx += c as f64 + 0.5;
        sy += r as f64 + 0.5;
    }
    if n == 0.0 {
        return Err(Error::EmptyMask);
    }
    let (mx, my) = (sx / n, sy / n);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (r, c) in mask.set_pixels() {
        let dx = c as f64 + 0.5 - mx;
        let dy = r as f64 + 0.5 - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    Ok((Point::new(mx, my), [sxx / n, syy / n, sxy / n]))
}

fn elongation_from_cov([xx, yy, xy]: [f64; 3]) -> f64 {
    let mean = (xx + yy) / 2.0;
    let spread = (((xx - yy) / 2.0).powi(2) + xy * xy).sqrt();
    let hi = (mean + spread).max(VARIANCE_FLOOR);
    let lo = (mean - spread).max(VARIANCE_FLOOR);
    (hi / lo).sqrt()
}
