use super::BinaryMask;
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, ImageDims};

/// Binarization cut applied to extrapolated certainties unless overridden.
pub const DEFAULT_MASK_THRESHOLD: f64 = 0.5;

/// Square grid of per-cell mask certainties emitted by the mask head for one
/// class channel, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskGrid {
    side: usize,
    values: Vec<f64>,
}

impl MaskGrid {
    pub fn new(side: usize, values: Vec<f64>) -> Result<Self> {
        if side == 0 {
            return Err(Error::InvalidGrid("side must be at least 1".into()));
        }
        if values.len() != side * side {
            return Err(Error::InvalidGrid(format!(
                "side {side} needs {} values, got {}",
                side * side,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidGrid(format!("value {v} outside [0, 1]")));
        }
        Ok(Self { side, values })
    }

    pub fn filled(side: usize, value: f64) -> Result<Self> {
        Self::new(side, vec![value; side * side])
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.side + col]
    }

    /// Bilinear sample at continuous grid coordinates where cell `(i, j)` has
    /// its center at `(j, i)`. Coordinates are clamped to the grid.
    pub fn sample(&self, gx: f64, gy: f64) -> f64 {
        let max = (self.side - 1) as f64;
        let gx = gx.clamp(0.0, max);
        let gy = gy.clamp(0.0, max);
        let (j0, i0) = (gx.floor() as usize, gy.floor() as usize);
        let (j1, i1) = ((j0 + 1).min(self.side - 1), (i0 + 1).min(self.side - 1));
        let (fx, fy) = (gx - j0 as f64, gy - i0 as f64);
        let top = self.get(i0, j0) * (1.0 - fx) + self.get(i0, j1) * fx;
        let bottom = self.get(i1, j0) * (1.0 - fx) + self.get(i1, j1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// Stretches a mask grid over `bbox` and binarizes it.
///
/// Pixels whose centers fall in `[x_min, x_max) x [y_min, y_max)` of the
/// frame-clipped box take the bilinear certainty at that center; the grid
/// spans the box with cell centers at `(j + 0.5) / side` of its extent.
/// Everything outside the box stays 0.
pub fn grid_extrapolate(
    grid: &MaskGrid,
    bbox: &BoundingBox,
    dims: ImageDims,
    threshold: f64,
) -> Result<BinaryMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidThreshold(threshold));
    }
    let mut mask = BinaryMask::zeros(dims);
    let clipped = bbox.clip_to(&dims.frame());
    if clipped.area() <= 0.0 {
        return Ok(mask);
    }
    let (w, h) = (bbox.width(), bbox.height());
    let side = grid.side as f64;
    let col0 = (clipped.x_min - 0.5).ceil().max(0.0) as u32;
    let row0 = (clipped.y_min - 0.5).ceil().max(0.0) as u32;
    for row in row0..dims.height {
        let yc = row as f64 + 0.5;
        if yc >= clipped.y_max {
            break;
        }
        if yc < clipped.y_min {
            continue;
        }
        let gy = (yc - bbox.y_min) / h * side - 0.5;
        for col in col0..dims.width {
            let xc = col as f64 + 0.5;
            if xc >= clipped.x_max {
                break;
            }
            if xc < clipped.x_min {
                continue;
            }
            let gx = (xc - bbox.x_min) / w * side - 0.5;
            if grid.sample(gx, gy) >= threshold {
                mask.set(row, col, true);
            }
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dims(w: u32, h: u32) -> ImageDims {
        ImageDims::new(w, h).unwrap()
    }

    fn bx(a: f64, b: f64, c: f64, d: f64) -> BoundingBox {
        BoundingBox::new(a, b, c, d).unwrap()
    }

    /// Pointwise bilinear evaluation written from scratch: maps a pixel center
    /// into grid space and weights the four surrounding cells.
    fn oracle_value(values: &[Vec<f64>], b: &BoundingBox, xc: f64, yc: f64) -> f64 {
        let n = values.len();
        let last = (n - 1) as f64;
        let u = ((xc - b.x_min) * n as f64 / b.width() - 0.5).max(0.0).min(last);
        let v = ((yc - b.y_min) * n as f64 / b.height() - 0.5).max(0.0).min(last);
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let wx = (1.0 - (u - j as f64).abs()).max(0.0);
                let wy = (1.0 - (v - i as f64).abs()).max(0.0);
                acc += wx * wy * values[i][j];
            }
        }
        acc
    }

    fn oracle_mask(values: &[Vec<f64>], b: &BoundingBox, d: ImageDims, t: f64) -> BinaryMask {
        let c = b.clip_to(&d.frame());
        BinaryMask::from_fn(d, |r, col| {
            let (xc, yc) = (col as f64 + 0.5, r as f64 + 0.5);
            c.area() > 0.0
                && xc >= c.x_min
                && xc < c.x_max
                && yc >= c.y_min
                && yc < c.y_max
                && oracle_value(values, b, xc, yc) >= t
        })
    }

    #[test]
    fn constant_field_fills_box() {
        let g = MaskGrid::filled(2, 1.0).unwrap();
        let m = grid_extrapolate(&g, &bx(0.0, 0.0, 8.0, 8.0), dims(8, 8), 0.5).unwrap();
        assert_eq!(m.count(), 64);
    }

    #[test]
    fn threshold_out_of_range() {
        let g = MaskGrid::filled(2, 1.0).unwrap();
        let b = bx(0.0, 0.0, 8.0, 8.0);
        for t in [1.0 + 1e-9, 1.0, 0.0, -0.1, f64::NAN] {
            assert!(matches!(
                grid_extrapolate(&g, &b, dims(8, 8), t),
                Err(Error::InvalidThreshold(_))
            ));
        }
    }

    #[test]
    fn corner_patch_matches_oracle() {
        let values = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
        let g = MaskGrid::new(2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = bx(0.0, 0.0, 8.0, 8.0);
        let m = grid_extrapolate(&g, &b, dims(8, 8), 0.5).unwrap();
        let expected = oracle_mask(&values, &b, dims(8, 8), 0.5);
        assert_eq!(m, expected);
        // rows/cols 0..=3 map to u in {0, 0, 0.125, 0.375}; (1-u)(1-v) >= 0.5
        let frozen: Vec<(u32, u32)> = vec![
            (0, 0), (0, 1), (0, 2), (0, 3),
            (1, 0), (1, 1), (1, 2), (1, 3),
            (2, 0), (2, 1), (2, 2), (2, 3),
            (3, 0), (3, 1), (3, 2),
        ];
        assert_eq!(m.set_pixels().collect::<Vec<_>>(), frozen);
    }

    #[test]
    fn empty_box_gives_empty_mask() {
        let g = MaskGrid::filled(3, 1.0).unwrap();
        let m = grid_extrapolate(&g, &bx(2.0, 2.0, 2.0, 6.0), dims(8, 8), 0.5).unwrap();
        assert!(m.is_empty());
        let off = grid_extrapolate(&g, &bx(20.0, 20.0, 30.0, 30.0), dims(8, 8), 0.5).unwrap();
        assert!(off.is_empty());
    }

    #[test]
    fn grid_validation() {
        assert!(MaskGrid::new(0, vec![]).is_err());
        assert!(MaskGrid::new(2, vec![0.0; 3]).is_err());
        assert!(MaskGrid::new(1, vec![1.5]).is_err());
    }

    fn scenario() -> impl Strategy<Value = (Vec<Vec<f64>>, BoundingBox, f64, f64)> {
        (prop_oneof![Just(15usize), Just(33usize), 1usize..6]).prop_flat_map(|side| {
            (
                proptest::collection::vec(proptest::collection::vec(0.0..=1.0f64, side), side),
                (-5.0..40.0f64, -5.0..30.0f64, 0.0..40.0f64, 0.0..30.0f64),
                0.01..0.99f64,
                0.01..0.99f64,
            )
                .prop_map(|(values, (x, y, w, h), t1, t2)| {
                    (values, bx(x, y, x + w, y + h), t1.min(t2), t1.max(t2))
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn bilinear_matches_oracle_and_is_monotone((values, b, t1, t2) in scenario()) {
            let d = dims(40, 30);
            let side = values.len();
            let g = MaskGrid::new(side, values.concat()).unwrap();
            let lo = grid_extrapolate(&g, &b, d, t1).unwrap();
            let hi = grid_extrapolate(&g, &b, d, t2).unwrap();
            prop_assert!(hi.is_subset_of(&lo));
            let full = grid_extrapolate(&MaskGrid::filled(side, 1.0).unwrap(), &b, d, 0.5).unwrap();
            prop_assert!(lo.is_subset_of(&full));
            // the oracle sums floating weights in a different order; compare away from the cut
            let c = b.clip_to(&d.frame());
            for r in 0..d.height {
                for col in 0..d.width {
                    let (xc, yc) = (col as f64 + 0.5, r as f64 + 0.5);
                    let inside = c.area() > 0.0 && xc >= c.x_min && xc < c.x_max && yc >= c.y_min && yc < c.y_max;
                    prop_assert_eq!(full.get(r, col), inside);
                    if inside {
                        let v = oracle_value(&values, &b, xc, yc);
                        if (v - t1).abs() > 1e-9 {
                            prop_assert_eq!(lo.get(r, col), v >= t1);
                        }
                    }
                }
            }
        }
    }
}
