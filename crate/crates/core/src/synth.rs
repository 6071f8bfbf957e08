//! Deterministic synthetic street scenes for running the pipeline without
//! KITTI data.
//!
//! A sensor 1.73 m above a flat ground plane casts 64 beams spread linearly
//! over [-24.8, +2.0] degrees of pitch and 2048 azimuth steps per
//! revolution. The scene holds parked cars (boxes), poles and trunks
//! (vertical cylinders) and building facades (large boxes). Every beam has a
//! small fixed pitch offset and every return a small azimuth jitter, range
//! noise and a random dropout, so the cloud is not aligned to a pixel grid.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::pc_io::PointCloud;

pub const SENSOR_HEIGHT: f64 = 1.73;
pub const BEAMS: usize = 64;
pub const AZIMUTH_STEPS: usize = 2048;
pub const PITCH_MAX: f64 = 2.0;
pub const PITCH_MIN: f64 = -24.8;
pub const MIN_RANGE: f64 = 2.0;
pub const MAX_RANGE: f64 = 120.0;

const DROPOUT: f64 = 0.02;
const RANGE_NOISE: f64 = 0.01;

/// Axis-aligned box in its own frame, rotated by `yaw` about +z.
#[derive(Debug, Clone, Copy)]
struct OrientedBox {
    center: [f64; 2],
    yaw: f64,
    half: [f64; 2],
    z: [f64; 2],
    reflectance: f32,
}

#[derive(Debug, Clone, Copy)]
struct Cylinder {
    center: [f64; 2],
    radius: f64,
    z: [f64; 2],
    reflectance: f32,
}

#[derive(Debug, Clone, Default)]
struct Scene {
    boxes: Vec<OrientedBox>,
    cylinders: Vec<Cylinder>,
}

impl OrientedBox {
    /// Slab test in the box frame; returns the entry distance.
    fn hit(&self, dir: [f64; 3]) -> Option<f64> {
        let (s, c) = self.yaw.sin_cos();
        // ray origin is the sensor at (0, 0, 0)
        let ox = -self.center[0];
        let oy = -self.center[1];
        let o = [c * ox + s * oy, -s * ox + c * oy, 0.0];
        let d = [c * dir[0] + s * dir[1], -s * dir[0] + c * dir[1], dir[2]];
        let lo = [-self.half[0], -self.half[1], self.z[0]];
        let hi = [self.half[0], self.half[1], self.z[1]];
        let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
        for k in 0..3 {
            if d[k].abs() < 1e-12 {
                if o[k] < lo[k] || o[k] > hi[k] {
                    return None;
                }
                continue;
            }
            let a = (lo[k] - o[k]) / d[k];
            let b = (hi[k] - o[k]) / d[k];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
            if t0 > t1 {
                return None;
            }
        }
        (t0 > 0.0).then_some(t0)
    }
}

impl Cylinder {
    fn hit(&self, dir: [f64; 3]) -> Option<f64> {
        let (ox, oy) = (-self.center[0], -self.center[1]);
        let a = dir[0] * dir[0] + dir[1] * dir[1];
        if a < 1e-12 {
            return None;
        }
        let b = 2.0 * (ox * dir[0] + oy * dir[1]);
        let c = ox * ox + oy * oy - self.radius * self.radius;
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return None;
        }
        let t = (-b - disc.sqrt()) / (2.0 * a);
        let z = t * dir[2];
        (t > 0.0 && z >= self.z[0] && z <= self.z[1]).then_some(t)
    }
}

impl Scene {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let ground = -SENSOR_HEIGHT;
        let mut scene = Scene::default();

        // building facades on both sides of the street
        let street_half = rng.gen_range(9.0..14.0);
        for side in [-1.0, 1.0] {
            let mut x = -60.0;
            while x < 60.0 {
                let len = rng.gen_range(12.0..30.0);
                let depth = rng.gen_range(8.0..15.0);
                let setback = rng.gen_range(0.0..4.0);
                scene.boxes.push(OrientedBox {
                    center: [x + len / 2.0, side * (street_half + setback + depth / 2.0)],
                    yaw: 0.0,
                    half: [len / 2.0, depth / 2.0],
                    z: [ground, ground + rng.gen_range(6.0..18.0)],
                    reflectance: rng.gen_range(0.2..0.6),
                });
                x += len + rng.gen_range(3.0..10.0);
            }
        }

        // parked and moving cars
        let cars = rng.gen_range(8..16);
        for _ in 0..cars {
            let along = rng.gen_range(-45.0..45.0);
            let across = if rng.gen_bool(0.7) {
                (street_half - 1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }
            } else {
                rng.gen_range(-3.5..3.5)
            };
            if f64::hypot(along, across) < 5.0 {
                continue;
            }
            scene.boxes.push(OrientedBox {
                center: [along, across],
                yaw: rng.gen_range(-0.15..0.15),
                half: [rng.gen_range(1.9..2.4), rng.gen_range(0.85..1.0)],
                z: [ground + 0.2, ground + rng.gen_range(1.4..1.7)],
                reflectance: rng.gen_range(0.3..0.9),
            });
        }

        // poles and tree trunks along the curbs
        let poles = rng.gen_range(10..20);
        for _ in 0..poles {
            let along = rng.gen_range(-60.0..60.0);
            let across = (street_half - 0.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            scene.cylinders.push(Cylinder {
                center: [along, across],
                radius: rng.gen_range(0.08..0.4),
                z: [ground, ground + rng.gen_range(3.0..9.0)],
                reflectance: rng.gen_range(0.1..0.5),
            });
        }
        scene
    }

    fn cast(&self, dir: [f64; 3]) -> Option<(f64, f32)> {
        let mut best: Option<(f64, f32)> = None;
        let mut consider = |t: f64, refl: f32| {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, refl));
            }
        };
        if dir[2] < 0.0 {
            consider(-SENSOR_HEIGHT / dir[2], 0.15);
        }
        for b in &self.boxes {
            if let Some(t) = b.hit(dir) {
                consider(t, b.reflectance);
            }
        }
        for c in &self.cylinders {
            if let Some(t) = c.hit(dir) {
                consider(t, c.reflectance);
            }
        }
        best
    }
}

/// A deterministic scan for `seed`, already inside the default depth band
/// and field of view.
pub fn synth_scene(seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = Scene::random(&mut rng);
    let row_step = (PITCH_MAX - PITCH_MIN) / BEAMS as f64;
    let col_step = 2.0 * PI / AZIMUTH_STEPS as f64;

    let mut points = Vec::with_capacity(BEAMS * AZIMUTH_STEPS);
    let mut intensity = Vec::with_capacity(points.capacity());
    for beam in 0..BEAMS {
        let nominal = PITCH_MAX - (beam as f64 + 0.5) * row_step;
        let pitch = (nominal + rng.gen_range(-0.2..0.2) * row_step).to_radians();
        for step in 0..AZIMUTH_STEPS {
            let yaw = PI - (step as f64 + 0.5 + rng.gen_range(-0.3..0.3)) * col_step;
            let dropped = rng.gen_bool(DROPOUT);
            let noise = rng.gen_range(-RANGE_NOISE..RANGE_NOISE);
            if dropped {
                continue;
            }
            let dir = [pitch.cos() * yaw.cos(), pitch.cos() * yaw.sin(), pitch.sin()];
            let Some((t, refl)) = scene.cast(dir) else {
                continue;
            };
            let r = t + noise;
            // keep clear of the band edges so f32 rounding cannot leave it
            if !(MIN_RANGE + 1e-3..=MAX_RANGE - 1e-3).contains(&r) {
                continue;
            }
            points.push([(r * dir[0]) as f32, (r * dir[1]) as f32, (r * dir[2]) as f32]);
            intensity.push(refl);
        }
    }
    PointCloud::with_intensity(points, Some(intensity)).expect("synthetic points are finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pc_io::range_of;

    #[test]
    fn deterministic() {
        assert_eq!(synth_scene(3), synth_scene(3));
        assert_ne!(synth_scene(3), synth_scene(4));
    }

    #[test]
    fn within_band_and_fov() {
        let c = synth_scene(0);
        assert!((50_000..=150_000).contains(&c.len()), "{} points", c.len());
        for p in c.points() {
            let r = range_of(p) as f64;
            assert!((MIN_RANGE..=MAX_RANGE).contains(&r), "range {r}");
            let pitch = (p[2] as f64 / r).asin().to_degrees();
            assert!((PITCH_MIN..=PITCH_MAX).contains(&pitch), "pitch {pitch}");
        }
    }

    #[test]
    fn box_and_cylinder_hits() {
        let b = OrientedBox {
            center: [10.0, 0.0],
            yaw: 0.0,
            half: [1.0, 1.0],
            z: [-1.0, 1.0],
            reflectance: 0.5,
        };
        assert!((b.hit([1.0, 0.0, 0.0]).unwrap() - 9.0).abs() < 1e-12);
        assert!(b.hit([-1.0, 0.0, 0.0]).is_none());
        let c = Cylinder {
            center: [0.0, 5.0],
            radius: 0.5,
            z: [-2.0, 2.0],
            reflectance: 0.5,
        };
        assert!((c.hit([0.0, 1.0, 0.0]).unwrap() - 4.5).abs() < 1e-12);
        assert!(c.hit([1.0, 0.0, 0.0]).is_none());
    }
}
