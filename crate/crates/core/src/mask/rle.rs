//! Column-major run-length encoding, COCO layout: counts alternate 0-runs
//! and 1-runs, starting with a (possibly empty) 0-run.

use super::BinaryMask;
use crate::error::{Error, Result};
use crate::geometry::ImageDims;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RleMask {
    dims: ImageDims,
    counts: Vec<u32>,
}

impl RleMask {
    /// Validates that the runs cover the frame exactly and that only the
    /// leading run may be empty.
    pub fn new(dims: ImageDims, counts: Vec<u32>) -> Result<Self> {
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        if total != dims.pixel_count() as u64 {
            return Err(Error::MalformedRle(format!(
                "counts sum to {total}, frame {dims} has {} pixels",
                dims.pixel_count()
            )));
        }
        if let Some(i) = counts.iter().skip(1).position(|&c| c == 0) {
            return Err(Error::MalformedRle(format!("empty run at position {}", i + 1)));
        }
        Ok(Self { dims, counts })
    }

    pub fn empty(dims: ImageDims) -> Self {
        Self {
            dims,
            counts: vec![dims.pixel_count() as u32],
        }
    }

    pub fn dims(&self) -> ImageDims {
        self.dims
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }

    /// Half-open `[start, end)` column-major index ranges of the 1-runs.
    pub fn runs(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        let mut pos = 0u64;
        self.counts.iter().enumerate().filter_map(move |(i, &c)| {
            let start = pos;
            pos += c as u64;
            (i % 2 == 1).then_some((start, pos))
        })
    }

    /// Number of pixels set in both masks, computed on the runs directly.
    pub fn intersection_area(&self, other: &RleMask) -> Result<u64> {
        if self.dims != other.dims {
            return Err(Error::DimsMismatch {
                left: self.dims.to_string(),
                right: other.dims.to_string(),
            });
        }
        let mut a = self.runs().peekable();
        let mut b = other.runs().peekable();
        let mut total = 0;
        while let (Some(&(s1, e1)), Some(&(s2, e2))) = (a.peek(), b.peek()) {
            let lo = s1.max(s2);
            let hi = e1.min(e2);
            if hi > lo {
                total += hi - lo;
            }
            if e1 <= e2 {
                a.next();
            } else {
                b.next();
            }
        }
        Ok(total)
    }

    pub fn iou(&self, other: &RleMask) -> Result<f64> {
        let inter = self.intersection_area(other)?;
        let union = self.area() + other.area() - inter;
        Ok(if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        })
    }
}

pub fn rle_encode(mask: &BinaryMask) -> RleMask {
    let dims = mask.dims();
    let mut counts = Vec::new();
    let mut current = 0u8;
    let mut run = 0u32;
    for c in 0..dims.width {
        for r in 0..dims.height {
            let v = mask.get(r, c) as u8;
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += 1;
        }
    }
    counts.push(run);
    RleMask { dims, counts }
}

pub fn rle_decode(rle: &RleMask) -> BinaryMask {
    let dims = rle.dims;
    let mut mask = BinaryMask::zeros(dims);
    let h = dims.height as u64;
    for (start, end) in rle.runs() {
        for i in start..end {
            mask.set((i % h) as u32, (i / h) as u32, true);
        }
    }
    mask
}

/// Mask IoU computed on run-length encodings without decoding.
pub fn rle_iou(a: &RleMask, b: &RleMask) -> Result<f64> {
    a.iou(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::mask_iou;
    use proptest::prelude::*;

    fn dims(w: u32, h: u32) -> ImageDims {
        ImageDims::new(w, h).unwrap()
    }

    #[test]
    fn encode_examples() {
        let d = dims(4, 4);
        assert_eq!(rle_encode(&BinaryMask::zeros(d)).counts(), &[16]);
        assert_eq!(rle_encode(&BinaryMask::from_fn(d, |_, _| true)).counts(), &[0, 16]);

        // column-major walk of a 2x2 frame: (r0,c0) (r1,c0) (r0,c1) (r1,c1)
        let m = BinaryMask::from_fn(dims(2, 2), |r, c| r == 0 && c == 1);
        let order: Vec<u8> = [(0, 0), (1, 0), (0, 1), (1, 1)]
            .iter()
            .map(|&(r, c)| m.get(r, c) as u8)
            .collect();
        assert_eq!(order, vec![0, 0, 1, 0]);
        assert_eq!(rle_encode(&m).counts(), &[2, 1, 1]);
    }

    #[test]
    fn malformed_counts_rejected() {
        let d = dims(2, 2);
        assert!(matches!(RleMask::new(d, vec![2, 1]), Err(Error::MalformedRle(_))));
        assert!(matches!(RleMask::new(d, vec![2, 0, 2]), Err(Error::MalformedRle(_))));
        assert!(RleMask::new(d, vec![0, 4]).is_ok());
    }

    fn random_mask() -> impl Strategy<Value = BinaryMask> {
        (1u32..=64, 1u32..=64).prop_flat_map(|(w, h)| {
            let n = (w * h) as usize;
            (0.0..1.0f64, proptest::collection::vec(0.0..1.0f64, n)).prop_map(move |(p, u)| {
                let bits = u.iter().map(|&x| (x < p) as u8).collect();
                BinaryMask::new(dims(w, h), bits).unwrap()
            })
        })
    }

    fn mask_pair() -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
        (1u32..=32, 1u32..=32).prop_flat_map(|(w, h)| {
            let n = (w * h) as usize;
            let bits = proptest::collection::vec(0u8..=1, n);
            (bits.clone(), bits).prop_map(move |(a, b)| {
                (
                    BinaryMask::new(dims(w, h), a).unwrap(),
                    BinaryMask::new(dims(w, h), b).unwrap(),
                )
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn round_trip(m in random_mask()) {
            let rle = rle_encode(&m);
            prop_assert!(RleMask::new(m.dims(), rle.counts().to_vec()).is_ok());
            prop_assert_eq!(rle.area() as usize, m.count());
            prop_assert_eq!(rle_decode(&rle), m);
        }

        #[test]
        fn rle_iou_equals_bitmap_iou((a, b) in mask_pair()) {
            let expected = mask_iou(&a, &b).unwrap();
            prop_assert_eq!(rle_iou(&rle_encode(&a), &rle_encode(&b)).unwrap(), expected);
        }
    }
}
