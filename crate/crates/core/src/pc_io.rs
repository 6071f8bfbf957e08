//! Point clouds and their on-disk formats.
//!
//! KITTI Velodyne scans are read from the raw `.bin` layout: consecutive
//! 16-byte records of four little-endian `f32` (x, y, z, reflectance), no
//! header. Clouds are written as binary little-endian PLY for viewers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

const KITTI_RECORD: usize = 16;

/// Sensor-frame points in meters with optional per-point reflectance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<[f32; 3]>,
    intensity: Option<Vec<f32>>,
}

impl PointCloud {
    pub fn new(points: Vec<[f32; 3]>) -> Result<Self> {
        Self::with_intensity(points, None)
    }

    pub fn with_intensity(points: Vec<[f32; 3]>, intensity: Option<Vec<f32>>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid(format!(
                "point {i} has a non-finite coordinate: {:?}",
                points[i]
            )));
        }
        if let Some(int) = &intensity {
            if int.len() != points.len() {
                return Err(Error::invalid(format!(
                    "intensity length {} does not match point count {}",
                    int.len(),
                    points.len()
                )));
            }
        }
        Ok(Self { points, intensity })
    }

    pub fn points(&self) -> &[[f32; 3]] {
        &self.points
    }

    pub fn intensity(&self) -> Option<&[f32]> {
        self.intensity.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<[f32; 3]> {
        self.points
    }
}

/// Euclidean range of a point, evaluated in `f64` and rounded once to `f32`.
///
/// This is the single definition of "range" shared by projection,
/// reconstruction and range filtering.
#[inline]
pub fn range_of(p: &[f32; 3]) -> f32 {
    range_f64(p) as f32
}

#[inline]
pub(crate) fn range_f64(p: &[f32; 3]) -> f64 {
    let (x, y, z) = (p[0] as f64, p[1] as f64, p[2] as f64);
    (x * x + y * y + z * z).sqrt()
}

pub fn read_kitti_bin(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_kitti(&bytes).map_err(|e| match e {
        Error::Malformed(m) => Error::Malformed(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Decode an in-memory KITTI record buffer.
pub fn decode_kitti(bytes: &[u8]) -> Result<PointCloud> {
    if !bytes.len().is_multiple_of(KITTI_RECORD) {
        return Err(Error::Malformed(format!(
            "KITTI scan size {} is not a multiple of {KITTI_RECORD} bytes",
            bytes.len()
        )));
    }
    let n = bytes.len() / KITTI_RECORD;
    let mut points = Vec::with_capacity(n);
    let mut intensity = Vec::with_capacity(n);
    for rec in bytes.chunks_exact(KITTI_RECORD) {
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap());
        let p = [f(0), f(1), f(2)];
        if !p.iter().all(|c| c.is_finite()) {
            return Err(Error::Malformed(format!(
                "record {} has a non-finite coordinate",
                points.len()
            )));
        }
        points.push(p);
        intensity.push(f(3));
    }
    Ok(PointCloud {
        points,
        intensity: Some(intensity),
    })
}

/// Encode a cloud in KITTI layout. Missing intensity is written as 0.
pub fn encode_kitti(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * KITTI_RECORD);
    for (i, p) in cloud.points.iter().enumerate() {
        let r = cloud.intensity.as_ref().map_or(0.0, |v| v[i]);
        for v in [p[0], p[1], p[2], r] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_kitti_bin(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_kitti(cloud)).map_err(|e| Error::io(path, e))
}

/// Write a binary little-endian PLY with `float x, y, z`, then `float
/// intensity` when the cloud carries it, then `uchar red, green, blue` when
/// `color` is given.
pub fn write_ply(cloud: &PointCloud, path: impl AsRef<Path>, color: Option<&[[u8; 3]]>) -> Result<()> {
    if let Some(c) = color {
        if c.len() != cloud.len() {
            return Err(Error::invalid(format!(
                "color length {} does not match point count {}",
                c.len(),
                cloud.len()
            )));
        }
    }
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_ply_to(&mut w, cloud, color)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn write_ply_to(w: &mut impl Write, cloud: &PointCloud, color: Option<&[[u8; 3]]>) -> std::io::Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    writeln!(w, "element vertex {}", cloud.len())?;
    writeln!(w, "property float x")?;
    writeln!(w, "property float y")?;
    writeln!(w, "property float z")?;
    let intensity = cloud.intensity.as_deref();
    if intensity.is_some() {
        writeln!(w, "property float intensity")?;
    }
    if color.is_some() {
        writeln!(w, "property uchar red")?;
        writeln!(w, "property uchar green")?;
        writeln!(w, "property uchar blue")?;
    }
    writeln!(w, "end_header")?;
    for (i, p) in cloud.points.iter().enumerate() {
        for c in p {
            w.write_all(&c.to_le_bytes())?;
        }
        if let Some(r) = intensity {
            w.write_all(&r[i].to_le_bytes())?;
        }
        if let Some(col) = color {
            w.write_all(&col[i])?;
        }
    }
    Ok(())
}

/// Keep points with `min_r <= range <= max_r`, preserving order.
pub fn filter_by_range(cloud: &PointCloud, min_r: f32, max_r: f32) -> Result<PointCloud> {
    if !(min_r >= 0.0 && min_r < max_r) {
        return Err(Error::invalid(format!(
            "range filter needs 0 <= min < max, got [{min_r}, {max_r}]"
        )));
    }
    let keep: Vec<bool> = cloud
        .points
        .iter()
        .map(|p| {
            let r = range_of(p);
            r >= min_r && r <= max_r
        })
        .collect();
    let points = cloud
        .points
        .iter()
        .zip(&keep)
        .filter_map(|(p, &k)| k.then_some(*p))
        .collect();
    let intensity = cloud.intensity.as_ref().map(|v| {
        v.iter()
            .zip(&keep)
            .filter_map(|(x, &k)| k.then_some(*x))
            .collect()
    });
    Ok(PointCloud { points, intensity })
}
