//! 2D and 3D quality measures.
//!
//! SSIM compares range images as grayscale images (depth / max_depth, EMPTY
//! as 0) with 8x8 uniform windows at stride 1 and population statistics.
//! The 3D measures classify interpolated points by their distance to the
//! nearest reference point: farther than `delta` is noise, otherwise the
//! point densifies a real surface.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::kdtree::KdTree;
use crate::pc_io::PointCloud;
use crate::projection::RangeImage;

pub const SSIM_WINDOW: usize = 8;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Default noise distance, meters.
pub const DEFAULT_DELTA: f64 = 0.5;

/// Scores for one reconstructed image/cloud against its reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub ssim: f64,
    pub noise_ratio: f64,
    pub chamfer: f64,
    pub densify_count: usize,
    pub noisy_count: usize,
    pub interpolated_count: usize,
}

pub fn ssim(a: &RangeImage, b: &RangeImage) -> Result<f64> {
    ssim_with(a, b, Exec::default())
}

pub fn ssim_with(a: &RangeImage, b: &RangeImage, exec: Exec) -> Result<f64> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::invalid(format!(
            "SSIM needs equal sizes, got {}x{} and {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let norm = |ri: &RangeImage| -> Vec<f64> {
        let m = ri.geometry().max_depth() as f64;
        ri.depth().iter().map(|&d| d as f64 / m).collect()
    };
    Ok(ssim_normalized(&norm(a), &norm(b), w, h, exec))
}

/// Mean SSIM of two `w x h` row-major images with values in `[0, 1]`.
pub(crate) fn ssim_normalized(x: &[f64], y: &[f64], w: usize, h: usize, exec: Exec) -> f64 {
    let nx = w - SSIM_WINDOW + 1;
    let ny = h - SSIM_WINDOW + 1;
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let row_sums = exec::map_range(exec, ny, |v0| {
        let mut acc = 0.0;
        for u0 in 0..nx {
            let pixels =
                || (v0..v0 + SSIM_WINDOW).flat_map(move |v| (u0..u0 + SSIM_WINDOW).map(move |u| v * w + u));
            let (mut mx, mut my) = (0.0, 0.0);
            for i in pixels() {
                mx += x[i];
                my += y[i];
            }
            mx /= n;
            my /= n;
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for i in pixels() {
                let (dx, dy) = (x[i] - mx, y[i] - my);
                vx += dx * dx;
                vy += dy * dy;
                cxy += dx * dy;
            }
            vx /= n;
            vy /= n;
            cxy /= n;
            acc += ((2.0 * mx * my + C1) * (2.0 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
        }
        acc
    });
    row_sums.iter().sum::<f64>() / (nx * ny) as f64
}

pub fn build_kdtree(cloud: &PointCloud) -> Result<KdTree> {
    KdTree::build(cloud)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseStats {
    /// Noisy fraction of interpolated points; 0 when there are none.
    pub ratio: f64,
    pub noisy_count: usize,
    pub densify_count: usize,
}

pub fn noise_ratio(interp: &PointCloud, reference: &PointCloud, delta: f64) -> Result<NoiseStats> {
    let tree = KdTree::build(reference)?;
    noise_ratio_in(&tree, interp.points(), delta, Exec::default())
}

/// [`noise_ratio`] against a prebuilt reference tree.
pub fn noise_ratio_in(reference: &KdTree, interp: &[[f32; 3]], delta: f64, exec: Exec) -> Result<NoiseStats> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(Error::invalid(format!(
            "noise distance must be positive, got {delta}"
        )));
    }
    let noisy_count = reference
        .nearest_distances(interp, exec)
        .into_iter()
        .filter(|&d| d > delta)
        .count();
    let ratio = if interp.is_empty() {
        0.0
    } else {
        noisy_count as f64 / interp.len() as f64
    };
    Ok(NoiseStats {
        ratio,
        noisy_count,
        densify_count: interp.len() - noisy_count,
    })
}

pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    chamfer_with(a, b, Exec::default())
}

pub fn chamfer_with(a: &PointCloud, b: &PointCloud, exec: Exec) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("chamfer distance needs two non-empty clouds"));
    }
    let ta = KdTree::build(a)?;
    let tb = KdTree::build(b)?;
    Ok(chamfer_trees(&ta, &tb, exec))
}

/// Symmetric mean NN distance between the point sets of two trees.
pub fn chamfer_trees(a: &KdTree, b: &KdTree, exec: Exec) -> f64 {
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let ab = mean(b.nearest_distances(a.points(), exec));
    let ba = mean(a.nearest_distances(b.points(), exec));
    0.5 * (ab + ba)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::{RiGeometry, EMPTY};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn image(w: usize, h: usize, depth: Vec<f32>) -> RangeImage {
        RangeImage::from_depth(RiGeometry::new(w, h, 2.0, -24.8, 2.0, 120.0).unwrap(), depth).unwrap()
    }

    #[test]
    fn ssim_self_is_one() {
        let depth: Vec<f32> = (0..32 * 16)
            .map(|i| if i % 5 == 0 { EMPTY } else { 2.0 + (i % 11) as f32 })
            .collect();
        let x = image(32, 16, depth);
        assert_eq!(ssim(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn ssim_inverted_checkerboard_is_negative() {
        // values 0/1 after normalization: EMPTY and max_depth
        let board: Vec<f32> = (0..64)
            .map(|i| if (i % 8 + i / 8) % 2 == 0 { 120.0 } else { EMPTY })
            .collect();
        let inv: Vec<f32> = board
            .iter()
            .map(|&d| if d == EMPTY { 120.0 } else { EMPTY })
            .collect();
        let s = ssim(&image(8, 8, board), &image(8, 8, inv)).unwrap();
        // single window: mu = 0.5, var = 0.25, cov = -0.25
        let want = ((2.0 * 0.25 + C1) * (-0.5 + C2)) / ((0.5 + C1) * (0.5 + C2));
        assert!((s - want).abs() < 1e-12, "{s} vs {want}");
        assert!(s < 0.0);
    }

    #[test]
    fn ssim_errors() {
        let a = image(8, 8, vec![5.0; 64]);
        let b = image(16, 8, vec![5.0; 128]);
        assert!(ssim(&a, &b).is_err());
        let small = image(4, 4, vec![5.0; 16]);
        assert!(ssim(&small, &small).is_err());
    }

    #[test]
    fn noise_ratio_cases() {
        let reference = PointCloud::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).unwrap();
        let subset = PointCloud::new(vec![[1.0, 0.0, 0.0]]).unwrap();
        let s = noise_ratio(&subset, &reference, 0.5).unwrap();
        assert_eq!((s.ratio, s.densify_count), (0.0, 1));

        let far = PointCloud::new(vec![[1.0, 10.0, 0.0]]).unwrap();
        let s = noise_ratio(&far, &reference, 0.5).unwrap();
        assert_eq!((s.ratio, s.noisy_count), (1.0, 1));

        assert!(noise_ratio(&far, &PointCloud::default(), 0.5).is_err());
        assert!(noise_ratio(&far, &reference, 0.0).is_err());
        assert_eq!(
            noise_ratio(&PointCloud::default(), &reference, 0.5)
                .unwrap()
                .ratio,
            0.0
        );
    }

    #[test]
    fn chamfer_cases() {
        let a = PointCloud::new(vec![[0.0, 0.0, 0.0]]).unwrap();
        let b = PointCloud::new(vec![[3.0, 0.0, 0.0]]).unwrap();
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        assert_eq!(chamfer(&a, &b).unwrap(), 3.0);
        assert!(chamfer(&a, &PointCloud::default()).is_err());
    }

    #[test]
    fn chamfer_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut cloud = |n| {
            PointCloud::new(
                (0..n)
                    .map(|_| {
                        [
                            rng.gen_range(-5.0..5.0),
                            rng.gen_range(-5.0..5.0),
                            rng.gen_range(-5.0..5.0),
                        ]
                    })
                    .collect(),
            )
            .unwrap()
        };
        let (a, b) = (cloud(50), cloud(50));
        let one_way = |x: &PointCloud, y: &PointCloud| {
            let mut total = 0.0;
            for p in x.points() {
                let mut best = f64::INFINITY;
                for q in y.points() {
                    let d = ((p[0] - q[0]) as f64)
                        .hypot((p[1] - q[1]) as f64)
                        .hypot((p[2] - q[2]) as f64);
                    best = best.min(d);
                }
                total += best;
            }
            total / x.len() as f64
        };
        let want = 0.5 * (one_way(&a, &b) + one_way(&b, &a));
        let got = chamfer(&a, &b).unwrap();
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        assert_eq!(got, chamfer(&b, &a).unwrap());
    }

    proptest! {
        #[test]
        fn ssim_symmetric_and_bounded(
            a in proptest::collection::vec(prop_oneof![Just(EMPTY), 2.0f32..120.0], 12 * 10),
            b in proptest::collection::vec(prop_oneof![Just(EMPTY), 2.0f32..120.0], 12 * 10),
        ) {
            let (a, b) = (image(12, 10, a), image(12, 10, b));
            let ab = ssim(&a, &b).unwrap();
            let ba = ssim(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-9);
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&ab));
            prop_assert_eq!(ssim_with(&a, &b, Exec::Sequential).unwrap(), ssim_with(&a, &b, Exec::Parallel).unwrap());
        }

        #[test]
        fn noise_ratio_monotone_in_delta(
            pts in proptest::collection::vec((-10.0f32..10.0, -10.0f32..10.0, -2.0f32..2.0), 1..60),
            queries in proptest::collection::vec((-12.0f32..12.0, -12.0f32..12.0, -3.0f32..3.0), 0..60),
            d1 in 0.01f64..3.0,
            d2 in 0.01f64..3.0,
        ) {
            let reference = PointCloud::new(pts.into_iter().map(|(x, y, z)| [x, y, z]).collect()).unwrap();
            let interp = PointCloud::new(queries.into_iter().map(|(x, y, z)| [x, y, z]).collect()).unwrap();
            let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
            let r_lo = noise_ratio(&interp, &reference, lo).unwrap();
            let r_hi = noise_ratio(&interp, &reference, hi).unwrap();
            prop_assert!(r_hi.ratio <= r_lo.ratio);
            prop_assert_eq!(r_lo.noisy_count + r_lo.densify_count, interp.len());
        }
    }
}
