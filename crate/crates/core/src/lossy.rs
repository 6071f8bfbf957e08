//! Lossy degradation of range images: resolution decimation followed by
//! uniform depth quantization. Code 0 of the quantizer is reserved for
//! EMPTY; depths use codes `1..=2^bits - 1`.

use crate::error::{Error, Result};
use crate::projection::{RangeImage, EMPTY};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerSpec {
    bits: u32,
    min_depth: f32,
    max_depth: f32,
}

impl QuantizerSpec {
    pub fn new(bits: u32, min_depth: f32, max_depth: f32) -> Result<Self> {
        if !(4..=16).contains(&bits) {
            return Err(Error::invalid(format!(
                "quantizer bits must be in [4, 16], got {bits}"
            )));
        }
        if !(min_depth < max_depth && min_depth.is_finite() && max_depth.is_finite()) {
            return Err(Error::invalid(format!(
                "quantizer range must satisfy min < max, got [{min_depth}, {max_depth}]"
            )));
        }
        Ok(Self {
            bits,
            min_depth,
            max_depth,
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }
    pub fn min_depth(&self) -> f32 {
        self.min_depth
    }
    pub fn max_depth(&self) -> f32 {
        self.max_depth
    }

    /// Number of quantization intervals across the depth range.
    fn intervals(&self) -> f64 {
        ((1u64 << self.bits) - 2) as f64
    }

    /// Distance between adjacent reconstruction levels.
    pub fn step(&self) -> f64 {
        (self.max_depth as f64 - self.min_depth as f64) / self.intervals()
    }

    /// Stored symbol for a depth: 0 for EMPTY, otherwise `1 + level`.
    pub fn encode(&self, d: f32) -> Result<u16> {
        if d == EMPTY {
            return Ok(0);
        }
        if !(d >= self.min_depth && d <= self.max_depth) {
            return Err(Error::invalid(format!(
                "depth {d} outside quantizer range [{}, {}]",
                self.min_depth, self.max_depth
            )));
        }
        Ok(1 + self.level(d) as u16)
    }

    fn level(&self, d: f32) -> u32 {
        let (lo, hi) = (self.min_depth as f64, self.max_depth as f64);
        ((d as f64 - lo) / (hi - lo) * self.intervals()).round() as u32
    }

    /// Reconstructed depth for a stored symbol.
    pub fn decode(&self, symbol: u16) -> f32 {
        if symbol == 0 {
            return EMPTY;
        }
        self.level_value(symbol as u32 - 1) as f32
    }

    fn level_value(&self, level: u32) -> f64 {
        self.min_depth as f64 + level as f64 * self.step()
    }

    /// Quantize one non-empty depth. The `f32` result is the representable
    /// neighbor of the exact level that keeps `|d - d'| <= step / 2`; a depth
    /// already within two ulps of its level is left as is, which makes
    /// quantization idempotent.
    fn requantize(&self, d: f32) -> f32 {
        let exact = self.level_value(self.level(d));
        let mut q = exact as f32;
        let ulp = (q.next_up() - q) as f64;
        if (d as f64 - exact).abs() <= 2.0 * ulp {
            return d;
        }
        let half = 0.5 * self.step();
        if (q as f64 - d as f64).abs() > half {
            q = if (q as f64) > (d as f64) {
                q.next_down()
            } else {
                q.next_up()
            };
        }
        q.clamp(self.min_depth, self.max_depth)
    }
}

/// Keep the top-left pixel of every `factor_x x factor_y` block.
pub fn downsample_ri(ri: &RangeImage, factor_x: usize, factor_y: usize) -> Result<RangeImage> {
    if factor_x == 0 || factor_y == 0 {
        return Err(Error::invalid("downsample factors must be >= 1"));
    }
    if !ri.width().is_multiple_of(factor_x) || !ri.height().is_multiple_of(factor_y) {
        return Err(Error::invalid(format!(
            "downsample factors {factor_x}x{factor_y} do not divide {}x{}",
            ri.width(),
            ri.height()
        )));
    }
    let (w, h) = (ri.width() / factor_x, ri.height() / factor_y);
    let geom = ri.geometry().with_size(w, h)?;
    let mut depth = Vec::with_capacity(w * h);
    for v in 0..h {
        let src = ri.row(v * factor_y);
        depth.extend((0..w).map(|u| src[u * factor_x]));
    }
    Ok(RangeImage::from_depth_unchecked(geom, depth))
}

pub fn quantize(ri: &RangeImage, q: &QuantizerSpec) -> Result<RangeImage> {
    let mut out = Vec::with_capacity(ri.depth().len());
    for &d in ri.depth() {
        if d == EMPTY {
            out.push(EMPTY);
            continue;
        }
        if !(d >= q.min_depth && d <= q.max_depth) {
            return Err(Error::invalid(format!(
                "depth {d} outside quantizer range [{}, {}]",
                q.min_depth, q.max_depth
            )));
        }
        out.push(q.requantize(d));
    }
    RangeImage::from_depth(*ri.geometry(), out)
}

/// Downsample, then quantize.
pub fn lossy_roundtrip(
    ri: &RangeImage,
    factor_x: usize,
    factor_y: usize,
    q: &QuantizerSpec,
) -> Result<RangeImage> {
    quantize(&downsample_ri(ri, factor_x, factor_y)?, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::{occupancy, RiGeometry};
    use proptest::prelude::*;

    fn geom(w: usize, h: usize) -> RiGeometry {
        RiGeometry::new(w, h, 2.0, -24.8, 2.0, 120.0).unwrap()
    }

    #[test]
    fn quantizer_validation() {
        assert!(QuantizerSpec::new(3, 2.0, 120.0).is_err());
        assert!(QuantizerSpec::new(17, 2.0, 120.0).is_err());
        assert!(QuantizerSpec::new(8, 120.0, 2.0).is_err());
    }

    #[test]
    fn endpoints_are_exact() {
        let q = QuantizerSpec::new(8, 2.0, 120.0).unwrap();
        assert_eq!(q.encode(2.0).unwrap(), 1);
        assert_eq!(q.encode(120.0).unwrap(), 255);
        assert_eq!(q.encode(EMPTY).unwrap(), 0);
        assert_eq!(q.decode(1), 2.0);
        assert_eq!(q.decode(255), 120.0);
        let ri = RangeImage::from_depth(geom(2, 2), vec![2.0, 120.0, 0.0, 0.0]).unwrap();
        let out = quantize(&ri, &q).unwrap();
        assert_eq!(out.depth(), &[2.0, 120.0, EMPTY, EMPTY]);
    }

    #[test]
    fn out_of_range_depth_rejected() {
        let q = QuantizerSpec::new(8, 5.0, 50.0).unwrap();
        let ri = RangeImage::from_depth(geom(2, 2), vec![2.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(quantize(&ri, &q), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn decimation_picks_even_columns() {
        let g = geom(8, 2);
        let depth: Vec<f32> = (0..16).map(|i| 2.0 + i as f32).collect();
        let ri = RangeImage::from_depth(g, depth).unwrap();
        let d = downsample_ri(&ri, 2, 1).unwrap();
        assert_eq!(d.width(), 4);
        assert_eq!(d.height(), 2);
        for v in 0..2 {
            for j in 0..4 {
                assert_eq!(d.get(v, j), ri.get(v, 2 * j));
            }
        }
        assert_eq!(downsample_ri(&ri, 1, 1).unwrap(), ri);
        assert!(downsample_ri(&ri, 3, 1).is_err());
        assert!(downsample_ri(&ri, 0, 1).is_err());
    }

    #[test]
    fn checkerboard_occupancy_never_grows() {
        // 8x4 checkerboard: occupied where (u + v) is even.
        let g = geom(8, 4);
        let depth: Vec<f32> = (0..32)
            .map(|i| if (i % 8 + i / 8) % 2 == 0 { 10.0 } else { EMPTY })
            .collect();
        let ri = RangeImage::from_depth(g, depth).unwrap();
        let before = occupancy(&ri);
        for (fx, fy) in [(1, 1), (2, 1), (1, 2), (2, 2), (4, 2)] {
            let d = downsample_ri(&ri, fx, fy).unwrap();
            // brute-force count of the kept top-left pixels
            let mut kept = 0;
            for v in (0..4).step_by(fy) {
                for u in (0..8).step_by(fx) {
                    kept += usize::from((u + v) % 2 == 0);
                }
            }
            assert_eq!(d.occupied_count(), kept);
            assert!(d.occupied_count() <= ri.occupied_count());
            // single-axis decimation keeps the fraction; 2x2 aliases onto the
            // occupied sub-lattice and reads as full
            if fx == 1 || fy == 1 {
                assert!(occupancy(&d) <= before);
            }
        }
        assert_eq!(occupancy(&downsample_ri(&ri, 2, 2).unwrap()), 1.0);
        // (2,1) keeps even columns: full on even rows, empty on odd rows
        assert_eq!(downsample_ri(&ri, 2, 1).unwrap().occupied_count(), 8);
    }

    #[test]
    fn near_identity_roundtrip() {
        let q = QuantizerSpec::new(16, 2.0, 120.0).unwrap();
        let ri =
            RangeImage::from_depth(geom(4, 2), vec![2.5, 0.0, 17.3, 119.9, 64.0, 8.8, 0.0, 2.0]).unwrap();
        let out = lossy_roundtrip(&ri, 1, 1, &q).unwrap();
        for (a, b) in ri.depth().iter().zip(out.depth()) {
            assert!(((a - b).abs() as f64) <= q.step());
        }
        assert_eq!(out, lossy_roundtrip(&ri, 1, 1, &q).unwrap());
    }

    proptest! {
        #[test]
        fn quantizer_properties(
            depths in proptest::collection::vec(prop_oneof![Just(0.0f32), 2.0f32..=120.0], 16),
            bits in 4u32..=16,
        ) {
            let q = QuantizerSpec::new(bits, 2.0, 120.0).unwrap();
            let ri = RangeImage::from_depth(geom(8, 2), depths).unwrap();
            let once = quantize(&ri, &q).unwrap();
            let twice = quantize(&once, &q).unwrap();
            prop_assert_eq!(&once, &twice);
            for (a, b) in ri.depth().iter().zip(once.depth()) {
                prop_assert_eq!(*a == EMPTY, *b == EMPTY);
                prop_assert!((*a as f64 - *b as f64).abs() <= 0.5 * q.step());
            }
        }
    }
}
