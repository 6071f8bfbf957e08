//! Spherical projection between point clouds and range images.
//!
//! Columns are binned linearly in yaw (column 0 at yaw = +pi, increasing
//! clockwise) and rows linearly in pitch (row 0 at the top of the vertical
//! field of view). Reconstruction emits one point per occupied pixel on the
//! ray through the pixel center, so projecting a reconstruction returns the
//! original image bit for bit.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::pc_io::{range_f64, range_of, PointCloud};

/// Depth value marking a pixel with no return.
pub const EMPTY: f32 = 0.0;

/// Image size, vertical field of view (degrees) and accepted depth band (meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiGeometry {
    width: usize,
    height: usize,
    pitch_max: f64,
    pitch_min: f64,
    min_depth: f32,
    max_depth: f32,
}

impl RiGeometry {
    pub fn new(
        width: usize,
        height: usize,
        pitch_max: f64,
        pitch_min: f64,
        min_depth: f32,
        max_depth: f32,
    ) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::invalid(format!(
                "range image must be at least 2x2, got {width}x{height}"
            )));
        }
        if !(pitch_min.is_finite() && pitch_max.is_finite() && pitch_min < pitch_max) {
            return Err(Error::invalid(format!(
                "pitch bounds must satisfy min < max, got [{pitch_min}, {pitch_max}]"
            )));
        }
        if !(min_depth > 0.0 && min_depth < max_depth && max_depth.is_finite()) {
            return Err(Error::invalid(format!(
                "depth band must satisfy 0 < min < max, got [{min_depth}, {max_depth}]"
            )));
        }
        Ok(Self {
            width,
            height,
            pitch_max,
            pitch_min,
            min_depth,
            max_depth,
        })
    }

    /// HDL-64E-like default: 2048x64, pitch [-24.8, +2.0] deg, depth [2, 120] m.
    pub fn kitti() -> Self {
        Self::new(2048, 64, 2.0, -24.8, 2.0, 120.0).unwrap()
    }

    /// Same field of view and depth band at a different resolution.
    pub fn with_size(&self, width: usize, height: usize) -> Result<Self> {
        Self::new(
            width,
            height,
            self.pitch_max,
            self.pitch_min,
            self.min_depth,
            self.max_depth,
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn pitch_max(&self) -> f64 {
        self.pitch_max
    }
    pub fn pitch_min(&self) -> f64 {
        self.pitch_min
    }
    pub fn min_depth(&self) -> f32 {
        self.min_depth
    }
    pub fn max_depth(&self) -> f32 {
        self.max_depth
    }
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Yaw (radians) of the ray through the center of column `u`.
    pub fn column_yaw(&self, u: usize) -> f64 {
        PI * (1.0 - 2.0 * (u as f64 + 0.5) / self.width as f64)
    }

    /// Pitch (radians) of the ray through the center of row `v`.
    pub fn row_pitch(&self, v: usize) -> f64 {
        let frac = 1.0 - (v as f64 + 0.5) / self.height as f64;
        (self.pitch_min + frac * (self.pitch_max - self.pitch_min)).to_radians()
    }

    /// Horizontal angular size of one pixel, radians.
    pub fn column_step(&self) -> f64 {
        2.0 * PI / self.width as f64
    }

    /// Pixel `(row, column)` hit by a point, or `None` when the point falls
    /// outside the depth band or vertical field of view.
    pub fn pixel_of(&self, p: &[f32; 3]) -> Option<(usize, usize, f32)> {
        let r64 = range_f64(p);
        let r = r64 as f32;
        if !(r >= self.min_depth && r <= self.max_depth) {
            return None;
        }
        let yaw = (p[1] as f64).atan2(p[0] as f64);
        let pitch = (p[2] as f64 / r64).clamp(-1.0, 1.0).asin().to_degrees();
        if pitch < self.pitch_min || pitch > self.pitch_max {
            return None;
        }
        let w = self.width as f64;
        let h = self.height as f64;
        let u = ((0.5 * (1.0 - yaw / PI)) * w).floor();
        let v = ((1.0 - (pitch - self.pitch_min) / (self.pitch_max - self.pitch_min)) * h).floor();
        let u = (u.max(0.0) as usize).min(self.width - 1);
        let v = (v.max(0.0) as usize).min(self.height - 1);
        Some((v, u, r))
    }
}

/// Row-major depth grid; [`EMPTY`] marks pixels without a return.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    geometry: RiGeometry,
    depth: Vec<f32>,
}

impl RangeImage {
    pub fn empty(geometry: RiGeometry) -> Self {
        Self {
            depth: vec![EMPTY; geometry.pixel_count()],
            geometry,
        }
    }

    pub fn from_depth(geometry: RiGeometry, depth: Vec<f32>) -> Result<Self> {
        if depth.len() != geometry.pixel_count() {
            return Err(Error::invalid(format!(
                "depth grid has {} values, geometry {}x{} needs {}",
                depth.len(),
                geometry.width,
                geometry.height,
                geometry.pixel_count()
            )));
        }
        let (lo, hi) = (geometry.min_depth, geometry.max_depth);
        if let Some(i) = depth.iter().position(|&d| d != EMPTY && !(d >= lo && d <= hi)) {
            return Err(Error::invalid(format!(
                "pixel {i} depth {} outside [{lo}, {hi}]",
                depth[i]
            )));
        }
        Ok(Self { geometry, depth })
    }

    /// Construction for grids already known to satisfy the invariants.
    pub(crate) fn from_depth_unchecked(geometry: RiGeometry, depth: Vec<f32>) -> Self {
        debug_assert_eq!(depth.len(), geometry.pixel_count());
        Self { geometry, depth }
    }

    pub fn geometry(&self) -> &RiGeometry {
        &self.geometry
    }
    pub fn width(&self) -> usize {
        self.geometry.width
    }
    pub fn height(&self) -> usize {
        self.geometry.height
    }
    pub fn depth(&self) -> &[f32] {
        &self.depth
    }
    pub fn row(&self, v: usize) -> &[f32] {
        let w = self.width();
        &self.depth[v * w..(v + 1) * w]
    }

    #[inline]
    pub fn get(&self, v: usize, u: usize) -> f32 {
        self.depth[v * self.width() + u]
    }

    pub fn set(&mut self, v: usize, u: usize, d: f32) -> Result<()> {
        let g = &self.geometry;
        if d != EMPTY && !(d >= g.min_depth && d <= g.max_depth) {
            return Err(Error::invalid(format!(
                "depth {d} outside [{}, {}]",
                g.min_depth, g.max_depth
            )));
        }
        let w = self.width();
        self.depth[v * w + u] = d;
        Ok(())
    }

    pub fn occupied_count(&self) -> usize {
        self.depth.iter().filter(|&&d| d != EMPTY).count()
    }
}

pub fn cloud_to_ri(cloud: &PointCloud, geom: &RiGeometry) -> RangeImage {
    let mut depth = vec![EMPTY; geom.pixel_count()];
    for p in cloud.points() {
        if let Some((v, u, r)) = geom.pixel_of(p) {
            let cell = &mut depth[v * geom.width + u];
            if *cell == EMPTY || r < *cell {
                *cell = r;
            }
        }
    }
    RangeImage::from_depth_unchecked(*geom, depth)
}

pub fn ri_to_cloud(ri: &RangeImage) -> PointCloud {
    let (points, _) = ri_to_cloud_indexed(ri);
    PointCloud::new(points).expect("pixel-center rays are finite")
}

/// Reconstruct points together with the `(row, column)` each came from.
pub fn ri_to_cloud_indexed(ri: &RangeImage) -> (Vec<[f32; 3]>, Vec<(usize, usize)>) {
    let g = ri.geometry();
    let mut points = Vec::with_capacity(ri.occupied_count());
    let mut origin = Vec::with_capacity(points.capacity());
    for v in 0..g.height {
        let pitch = g.row_pitch(v);
        for u in 0..g.width {
            let d = ri.get(v, u);
            if d == EMPTY {
                continue;
            }
            points.push(point_on_ray(d, g.column_yaw(u), pitch));
            origin.push((v, u));
        }
    }
    (points, origin)
}

/// The `f32` point on the ray `(yaw, pitch)` whose [`range_of`] is exactly `d`.
///
/// Rounding each coordinate to `f32` perturbs the recomputed range by up to
/// an ulp, so the coordinates are nudged by a few ulps until it matches.
pub(crate) fn point_on_ray(d: f32, yaw: f64, pitch: f64) -> [f32; 3] {
    let dir = [pitch.cos() * yaw.cos(), pitch.cos() * yaw.sin(), pitch.sin()];
    let base = dir.map(|c| (d as f64 * c) as f32);
    if range_of(&base) == d {
        return base;
    }
    let mut best = base;
    let mut best_err = (range_f64(&base) - d as f64).abs();
    for off in ulp_offsets() {
        let cand = [
            step_ulps(base[0], off[0]),
            step_ulps(base[1], off[1]),
            step_ulps(base[2], off[2]),
        ];
        if range_of(&cand) == d {
            return cand;
        }
        let err = (range_f64(&cand) - d as f64).abs();
        if err < best_err {
            best = cand;
            best_err = err;
        }
    }
    best
}

fn step_ulps(x: f32, n: i32) -> f32 {
    let mut x = x;
    for _ in 0..n.unsigned_abs() {
        x = if n > 0 { x.next_up() } else { x.next_down() };
    }
    x
}

/// Offsets in [-3, 3]^3 ordered by L1 norm, then lexicographically.
fn ulp_offsets() -> &'static [[i32; 3]] {
    use std::sync::OnceLock;
    static OFFSETS: OnceLock<Vec<[i32; 3]>> = OnceLock::new();
    OFFSETS.get_or_init(|| {
        let mut v = Vec::new();
        for a in -3..=3 {
            for b in -3..=3 {
                for c in -3..=3 {
                    if (a, b, c) != (0, 0, 0) {
                        v.push([a, b, c]);
                    }
                }
            }
        }
        v.sort_by_key(|o| (o.iter().map(|x: &i32| x.abs()).sum::<i32>(), *o));
        v
    })
}

/// Fraction of occupied pixels.
pub fn occupancy(ri: &RangeImage) -> f64 {
    ri.occupied_count() as f64 / ri.geometry().pixel_count() as f64
}

/// Write a 16-bit binary PGM, depth mapped linearly from `[0, max_depth]`
/// to `[0, 65535]`, EMPTY as 0.
pub fn write_pgm(ri: &RangeImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let max = ri.geometry().max_depth as f64;
    let mut body = || -> std::io::Result<()> {
        write!(w, "P5\n{} {}\n65535\n", ri.width(), ri.height())?;
        for &d in ri.depth() {
            let code = ((d as f64 / max) * 65535.0).round().clamp(0.0, 65535.0) as u16;
            w.write_all(&code.to_be_bytes())?;
        }
        w.flush()
    };
    body().map_err(|e| Error::io(path, e))
}

/// Read a 16-bit PGM written by [`write_pgm`]. Image size comes from the
/// header; field of view and depth band come from `template`. Nonzero codes
/// are clamped into the depth band to absorb the 16-bit mapping error.
pub fn read_pgm(path: impl AsRef<Path>, template: &RiGeometry) -> Result<RangeImage> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let malformed = |m: &str| Error::Malformed(format!("{}: {m}", path.display()));

    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(malformed("truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    if fields[0] != "P5" {
        return Err(malformed("not a binary PGM (P5)"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| malformed("bad PGM header number"));
    let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval != 65535 {
        return Err(malformed("expected 16-bit PGM (maxval 65535)"));
    }
    let n = width * height;
    if bytes.len() < pos + 2 * n {
        return Err(malformed("truncated PGM raster"));
    }
    let geom = template.with_size(width, height)?;
    let (lo, hi, max) = (geom.min_depth, geom.max_depth, geom.max_depth as f64);
    let depth = bytes[pos..pos + 2 * n]
        .chunks_exact(2)
        .map(|c| {
            let code = u16::from_be_bytes([c[0], c[1]]);
            if code == 0 {
                EMPTY
            } else {
                ((code as f64 / 65535.0 * max) as f32).clamp(lo, hi)
            }
        })
        .collect();
    Ok(RangeImage::from_depth_unchecked(geom, depth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geom1024() -> RiGeometry {
        RiGeometry::new(1024, 64, 2.0, -24.8, 2.0, 120.0).unwrap()
    }

    #[test]
    fn geometry_invariants() {
        assert!(RiGeometry::new(1, 64, 2.0, -24.8, 2.0, 120.0).is_err());
        assert!(RiGeometry::new(64, 64, -30.0, -24.8, 2.0, 120.0).is_err());
        assert!(RiGeometry::new(64, 64, 2.0, -24.8, 0.0, 120.0).is_err());
        assert!(RiGeometry::new(64, 64, 2.0, -24.8, 130.0, 120.0).is_err());
    }

    #[test]
    fn single_forward_point() {
        // u = floor(0.5 * 1024) = 512; v = floor((1 - 24.8/26.8) * 64) = 4
        let c = PointCloud::new(vec![[10.0, 0.0, 0.0]]).unwrap();
        let ri = cloud_to_ri(&c, &geom1024());
        assert_eq!(ri.occupied_count(), 1);
        assert_eq!(ri.get(4, 512), 10.0);
    }

    #[test]
    fn empty_cloud_gives_empty_image() {
        let ri = cloud_to_ri(&PointCloud::default(), &geom1024());
        assert_eq!(occupancy(&ri), 0.0);
        assert!(ri_to_cloud(&ri).is_empty());
    }

    #[test]
    fn nearest_return_wins() {
        let c = PointCloud::new(vec![[9.0, 0.0, 0.0], [5.0, 0.0, 0.0]]).unwrap();
        let ri = cloud_to_ri(&c, &geom1024());
        assert_eq!(ri.occupied_count(), 1);
        assert_eq!(ri.get(4, 512), 5.0);
    }

    #[test]
    fn out_of_band_points_dropped() {
        let c = PointCloud::new(vec![
            [1.0, 0.0, 0.0],   // too close
            [130.0, 0.0, 0.0], // too far
            [0.0, 0.0, 10.0],  // straight up
        ])
        .unwrap();
        assert_eq!(cloud_to_ri(&c, &geom1024()).occupied_count(), 0);
    }

    #[test]
    fn yaw_pi_borders_clamp() {
        let g = geom1024();
        let (_, u, _) = g.pixel_of(&[-10.0, 0.0, 0.0]).unwrap();
        assert_eq!(u, 0);
        let (_, u, _) = g.pixel_of(&[-10.0, -0.0, 0.0]).unwrap();
        assert!(u == 0 || u == 1023);
        let (_, u, _) = g.pixel_of(&[-10.0, -1e-6, 0.0]).unwrap();
        assert_eq!(u, 1023);
    }

    #[test]
    fn single_pixel_reconstruction() {
        let g = geom1024();
        let mut ri = RangeImage::empty(g);
        ri.set(4, 512, 10.0).unwrap();
        let c = ri_to_cloud(&ri);
        assert_eq!(c.len(), 1);
        let p = c.points()[0];
        assert_eq!(range_of(&p), 10.0);
        let yaw = (p[1] as f64).atan2(p[0] as f64);
        assert!((yaw + PI / 1024.0).abs() < 1e-6, "yaw {yaw}");
    }

    #[test]
    fn occupancy_counts() {
        let g = RiGeometry::new(4, 2, 2.0, -24.8, 2.0, 120.0).unwrap();
        let ri = RangeImage::from_depth(g, vec![3.0, 0.0, 4.0, 0.0, 0.0, 5.0, 0.0, 0.0]).unwrap();
        assert_eq!(occupancy(&ri), 0.375);
        let full = RangeImage::from_depth(g, vec![3.0; 8]).unwrap();
        assert_eq!(occupancy(&full), 1.0);
    }

    #[test]
    fn from_depth_checks_band() {
        let g = RiGeometry::new(2, 2, 2.0, -24.8, 2.0, 120.0).unwrap();
        assert!(RangeImage::from_depth(g, vec![1.0, 0.0, 0.0, 0.0]).is_err());
        assert!(RangeImage::from_depth(g, vec![0.0; 3]).is_err());
    }

    #[test]
    fn pgm_roundtrip_within_code_step() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ri.pgm");
        let g = RiGeometry::new(4, 2, 2.0, -24.8, 2.0, 120.0).unwrap();
        let ri = RangeImage::from_depth(g, vec![2.0, 0.0, 50.5, 120.0, 7.25, 0.0, 3.0, 99.9]).unwrap();
        write_pgm(&ri, &path).unwrap();
        let back = read_pgm(&path, &RiGeometry::kitti()).unwrap();
        assert_eq!(back.width(), 4);
        assert_eq!(back.height(), 2);
        let step = 120.0 / 65535.0;
        for (a, b) in ri.depth().iter().zip(back.depth()) {
            assert_eq!(*a == EMPTY, *b == EMPTY);
            assert!((a - b).abs() <= step, "{a} vs {b}");
        }
    }

    proptest! {
        #[test]
        fn reconstruction_range_is_exact(
            d in 2.0f32..=120.0,
            u in 0usize..2048,
            v in 0usize..64,
        ) {
            let g = RiGeometry::kitti();
            let p = point_on_ray(d, g.column_yaw(u), g.row_pitch(v));
            prop_assert_eq!(range_of(&p), d);
            prop_assert_eq!(g.pixel_of(&p), Some((v, u, d)));
        }

        #[test]
        fn projection_ignores_point_order(
            pts in proptest::collection::vec(
                (-60.0f32..60.0, -60.0f32..60.0, -8.0f32..1.0), 0..300),
            seed in any::<u64>(),
        ) {
            let pts: Vec<[f32; 3]> = pts.into_iter().map(|(x, y, z)| [x, y, z]).collect();
            let g = RiGeometry::new(256, 16, 2.0, -24.8, 2.0, 120.0).unwrap();
            let a = cloud_to_ri(&PointCloud::new(pts.clone()).unwrap(), &g);
            let mut shuffled = pts;
            use rand::{seq::SliceRandom, SeedableRng};
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let b = cloud_to_ri(&PointCloud::new(shuffled.clone()).unwrap(), &g);
            prop_assert_eq!(&a, &b);
            let bound = (shuffled.len() as f64 / g.pixel_count() as f64).min(1.0);
            prop_assert!(occupancy(&a) <= bound);
        }

        #[test]
        fn reprojection_is_identity(
            cells in proptest::collection::vec((0usize..128, 0usize..8, 2.0f32..120.0), 0..200),
        ) {
            let g = RiGeometry::new(128, 8, 2.0, -24.8, 2.0, 120.0).unwrap();
            let mut ri = RangeImage::empty(g);
            for (u, v, d) in cells {
                ri.set(v, u, d).unwrap();
            }
            let again = cloud_to_ri(&ri_to_cloud(&ri), &g);
            prop_assert_eq!(again, ri);
        }
    }
}
