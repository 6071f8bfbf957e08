//! Standard separable image interpolators used as comparison baselines.
//!
//! These are intentionally naive about range-image structure: EMPTY pixels
//! enter the filter as depth 0.0, exactly like a grayscale image would.
//! Sampling follows the pixel-center convention
//! `s = (t + 0.5) / factor - 0.5`, borders replicate the edge pixel.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::projection::{RangeImage, EMPTY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineMethod {
    Bilinear,
    /// Keys cubic convolution, `a = -0.5`.
    Bicubic,
    /// Windowed sinc with three lobes.
    Lanczos3,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 3] = [Self::Bilinear, Self::Bicubic, Self::Lanczos3];

    /// Kernel half-width in source pixels.
    pub fn support(self) -> usize {
        match self {
            Self::Bilinear => 1,
            Self::Bicubic => 2,
            Self::Lanczos3 => 3,
        }
    }

    /// Continuous kernel value at signed distance `x`.
    pub fn kernel(self, x: f64) -> f64 {
        let ax = x.abs();
        match self {
            Self::Bilinear => (1.0 - ax).max(0.0),
            Self::Bicubic => {
                const A: f64 = -0.5;
                if ax <= 1.0 {
                    ((A + 2.0) * ax - (A + 3.0)) * ax * ax + 1.0
                } else if ax < 2.0 {
                    ((A * ax - 5.0 * A) * ax + 8.0 * A) * ax - 4.0 * A
                } else {
                    0.0
                }
            }
            Self::Lanczos3 => {
                if ax < 1e-12 {
                    1.0
                } else if ax.fract() == 0.0 {
                    0.0
                } else if ax < 3.0 {
                    let px = PI * ax;
                    3.0 * px.sin() * (px / 3.0).sin() / (px * px)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Bilinear => "bilinear",
            Self::Bicubic => "bicubic",
            Self::Lanczos3 => "lanczos3",
        }
    }
}

impl fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bilinear" => Ok(Self::Bilinear),
            "bicubic" => Ok(Self::Bicubic),
            "lanczos3" | "lanczos" => Ok(Self::Lanczos3),
            other => Err(Error::invalid(format!("unknown baseline method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpscaleSpec {
    pub factor_x: usize,
    pub factor_y: usize,
    pub method: BaselineMethod,
}

impl UpscaleSpec {
    pub fn new(factor_x: usize, factor_y: usize, method: BaselineMethod) -> Result<Self> {
        if factor_x == 0 || factor_y == 0 {
            return Err(Error::invalid("upscale factors must be >= 1"));
        }
        Ok(Self {
            factor_x,
            factor_y,
            method,
        })
    }
}

/// Normalized tap weights for a sample at fractional offset `phase` past
/// source pixel `i0`. Tap `k` sits at `i0 - support + 1 + k`, so for
/// bilinear at phase 0 the weights are `[1.0, 0.0]`.
pub fn kernel_weights(method: BaselineMethod, phase: f64) -> Vec<f64> {
    let s = method.support() as isize;
    let mut w: Vec<f64> = (-(s - 1)..=s).map(|j| method.kernel(j as f64 - phase)).collect();
    let sum: f64 = w.iter().sum();
    for x in &mut w {
        *x /= sum;
    }
    w
}

/// Source tap start index and weights for every output coordinate.
struct Taps {
    start: Vec<isize>,
    weights: Vec<Vec<f64>>,
}

fn taps(method: BaselineMethod, out_len: usize, factor: usize) -> Taps {
    let support = method.support() as isize;
    let mut start = Vec::with_capacity(out_len);
    let mut weights = Vec::with_capacity(out_len);
    for t in 0..out_len {
        let s = (t as f64 + 0.5) / factor as f64 - 0.5;
        let i0 = s.floor();
        start.push(i0 as isize - support + 1);
        weights.push(kernel_weights(method, s - i0));
    }
    Taps { start, weights }
}

#[inline]
fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

pub fn upscale_baseline(ri: &RangeImage, spec: &UpscaleSpec) -> Result<RangeImage> {
    upscale_baseline_with(ri, spec, Exec::default())
}

pub fn upscale_baseline_with(ri: &RangeImage, spec: &UpscaleSpec, exec: Exec) -> Result<RangeImage> {
    let (w, h) = (ri.width(), ri.height());
    let (ow, oh) = (w * spec.factor_x, h * spec.factor_y);
    let geom = ri.geometry().with_size(ow, oh)?;
    let tx = taps(spec.method, ow, spec.factor_x);
    let ty = taps(spec.method, oh, spec.factor_y);

    // horizontal pass: h x ow in f64
    let mut tmp = vec![0.0f64; h * ow];
    exec::for_each_chunk_mut(exec, &mut tmp, ow, |v, out| {
        let src = ri.row(v);
        for (t, o) in out.iter_mut().enumerate() {
            let s0 = tx.start[t];
            *o = tx.weights[t]
                .iter()
                .enumerate()
                .map(|(k, wk)| wk * src[clamp_index(s0 + k as isize, w)] as f64)
                .sum();
        }
    });

    let (lo, hi) = (geom.min_depth() as f64, geom.max_depth() as f64);
    let mut depth = vec![EMPTY; ow * oh];
    exec::for_each_chunk_mut(exec, &mut depth, ow, |t, out| {
        let s0 = ty.start[t];
        let wts = &ty.weights[t];
        for (u, o) in out.iter_mut().enumerate() {
            let x: f64 = wts
                .iter()
                .enumerate()
                .map(|(k, wk)| wk * tmp[clamp_index(s0 + k as isize, h) * ow + u])
                .sum();
            let x = x.clamp(0.0, hi);
            *o = if x < lo { EMPTY } else { x as f32 };
        }
    });
    Ok(RangeImage::from_depth_unchecked(geom, depth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::RiGeometry;

    fn geom(w: usize, h: usize) -> RiGeometry {
        RiGeometry::new(w, h, 2.0, -24.8, 2.0, 120.0).unwrap()
    }

    #[test]
    fn bilinear_on_grid_weights() {
        assert_eq!(kernel_weights(BaselineMethod::Bilinear, 0.0), vec![1.0, 0.0]);
    }

    #[test]
    fn keys_half_phase_weights() {
        let w = kernel_weights(BaselineMethod::Bicubic, 0.5);
        let want = [-0.0625, 0.5625, 0.5625, -0.0625];
        for (a, b) in w.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{w:?}");
        }
    }

    #[test]
    fn lanczos_on_grid_is_delta() {
        let w = kernel_weights(BaselineMethod::Lanczos3, 0.0);
        assert_eq!(w.len(), 6);
        for (k, x) in w.iter().enumerate() {
            let want = if k == 2 { 1.0 } else { 0.0 };
            assert_eq!(*x, want, "{w:?}");
        }
    }

    #[test]
    fn weights_sum_to_one() {
        for m in BaselineMethod::ALL {
            for i in 0..100 {
                let w = kernel_weights(m, i as f64 / 100.0);
                assert_eq!(w.len(), 2 * m.support());
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn constant_image_is_preserved() {
        let ri = RangeImage::from_depth(geom(16, 4), vec![7.0; 64]).unwrap();
        for m in BaselineMethod::ALL {
            let up = upscale_baseline(&ri, &UpscaleSpec::new(2, 1, m).unwrap()).unwrap();
            assert_eq!(up.width(), 32);
            for &d in up.depth() {
                assert!((d - 7.0).abs() < 1e-5, "{m}: {d}");
            }
        }
    }

    #[test]
    fn bilinear_midpoint() {
        // With factor 2, output samples sit at quarter offsets; a factor of
        // 3 puts output 4 exactly on source coordinate 1.0 and output 2 on 0.5.
        let ri = RangeImage::from_depth(geom(2, 2), vec![4.0, 8.0, 4.0, 8.0]).unwrap();
        let up = upscale_baseline(&ri, &UpscaleSpec::new(2, 1, BaselineMethod::Bilinear).unwrap()).unwrap();
        assert_eq!(up.row(0), &[4.0, 5.0, 7.0, 8.0]);
        let mid = kernel_weights(BaselineMethod::Bilinear, 0.5);
        assert_eq!(mid[0] * 4.0 + mid[1] * 8.0, 6.0);
        let up3 = upscale_baseline(&ri, &UpscaleSpec::new(3, 1, BaselineMethod::Bilinear).unwrap()).unwrap();
        assert_eq!(up3.get(0, 1), 4.0);
        assert_eq!(up3.get(0, 4), 8.0);
    }

    #[test]
    fn empty_pixels_blend_as_zero() {
        let ri =
            RangeImage::from_depth(geom(4, 2), vec![10.0, 0.0, 10.0, 10.0, 10.0, 0.0, 10.0, 10.0]).unwrap();
        let up = upscale_baseline(&ri, &UpscaleSpec::new(2, 1, BaselineMethod::Bilinear).unwrap()).unwrap();
        // s = 0.25 → 0.75*10 + 0.25*0: a phantom point 2.5 m in front
        assert_eq!(up.get(0, 1), 7.5);
        // s = 0.75 → 0.25*10 + 0.75*0
        assert_eq!(up.get(0, 2), 2.5);
        // s = 1.25 → 0.75*0 + 0.25*10
        assert_eq!(up.get(0, 3), 2.5);
    }

    #[test]
    fn below_min_depth_becomes_empty() {
        let ri = RangeImage::from_depth(geom(4, 2), vec![3.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0]).unwrap();
        let up = upscale_baseline(&ri, &UpscaleSpec::new(2, 1, BaselineMethod::Bilinear).unwrap()).unwrap();
        // 0.25*3 = 0.75 < 2.0
        assert_eq!(up.get(0, 2), EMPTY);
        assert!(up.depth().iter().all(|&d| d == EMPTY || d >= 2.0));
    }

    #[test]
    fn exec_modes_match() {
        let depth: Vec<f32> = (0..64 * 8).map(|i| 2.0 + ((i * 37) % 97) as f32).collect();
        let ri = RangeImage::from_depth(geom(64, 8), depth).unwrap();
        for m in BaselineMethod::ALL {
            let spec = UpscaleSpec::new(2, 2, m).unwrap();
            assert_eq!(
                upscale_baseline_with(&ri, &spec, Exec::Sequential).unwrap(),
                upscale_baseline_with(&ri, &spec, Exec::Parallel).unwrap()
            );
        }
    }
}
