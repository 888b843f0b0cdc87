//! Solid shapes that are both point-sampled into scans and ray-cast for the
//! analytic ground-truth rasters.

use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};

/// Rays must travel at least this far before a hit counts.
const T_MIN: f64 = 1e-9;

/// Face bits of a box, in its local frame.
pub mod faces {
    pub const NEG_X: u8 = 1;
    pub const POS_X: u8 = 2;
    pub const NEG_Y: u8 = 4;
    pub const POS_Y: u8 = 8;
    pub const NEG_Z: u8 = 16;
    pub const POS_Z: u8 = 32;
    pub const VERTICAL: u8 = NEG_X | POS_X | NEG_Y | POS_Y;
    pub const ALL: u8 = VERTICAL | NEG_Z | POS_Z;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    /// Solid box rotated by `yaw` about the vertical axis. Only the faces in
    /// the `faces` mask are sampled; ray casts treat the box as solid, so
    /// unsampled faces must never be visible.
    Box {
        center: Point3<f64>,
        yaw: f64,
        half: Vector3<f64>,
        faces: u8,
    },
    /// Vertical cylinder; the caps are never sampled.
    Cylinder {
        base: Point3<f64>,
        radius: f64,
        height: f64,
    },
    Sphere {
        center: Point3<f64>,
        radius: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub class_id: u8,
}

fn cells(extent: f64, spacing: f64) -> usize {
    (extent / spacing).round().max(1.0) as usize
}

/// Cell-center coordinates of `n` equal cells over `[-h, h]`.
fn centers(h: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| -h + (i as f64 + 0.5) * 2.0 * h / n as f64)
}

impl Primitive {
    /// Appends surface samples roughly `spacing` apart.
    pub fn sample(&self, spacing: f64, out: &mut Vec<Point3<f64>>) {
        match self.shape {
            Shape::Box {
                center,
                yaw,
                half,
                faces: mask,
            } => {
                let (s, c) = yaw.sin_cos();
                let world = |l: Vector3<f64>| center + Vector3::new(c * l.x - s * l.y, s * l.x + c * l.y, l.z);
                let n = [
                    cells(2.0 * half.x, spacing),
                    cells(2.0 * half.y, spacing),
                    cells(2.0 * half.z, spacing),
                ];
                for axis in 0..3 {
                    let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
                    for (bit, sign) in [(1u8 << (2 * axis), -1.0), (1u8 << (2 * axis + 1), 1.0)] {
                        if mask & bit == 0 {
                            continue;
                        }
                        for a in centers(half[a1], n[a1]) {
                            for b in centers(half[a2], n[a2]) {
                                let mut l = Vector3::zeros();
                                l[axis] = sign * half[axis];
                                l[a1] = a;
                                l[a2] = b;
                                out.push(world(l));
                            }
                        }
                    }
                }
            }
            Shape::Cylinder { base, radius, height } => {
                let nc = cells(2.0 * PI * radius, spacing).max(6);
                let nh = cells(height, spacing);
                for k in 0..nh {
                    let z = base.z + (k as f64 + 0.5) * height / nh as f64;
                    for i in 0..nc {
                        let a = 2.0 * PI * (i as f64 + 0.5) / nc as f64;
                        out.push(Point3::new(base.x + radius * a.cos(), base.y + radius * a.sin(), z));
                    }
                }
            }
            Shape::Sphere { center, radius } => {
                let n = ((4.0 * PI * radius * radius) / (spacing * spacing)).round().max(8.0) as usize;
                let golden = PI * (3.0 - 5f64.sqrt());
                for i in 0..n {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * i as f64;
                    out.push(center + Vector3::new(r * a.cos(), r * a.sin(), z) * radius);
                }
            }
        }
    }

    /// Smallest ray parameter `t > 0` with `origin + t * dir` on a surface
    /// this primitive samples.
    pub fn intersect(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match self.shape {
            Shape::Box { center, yaw, half, .. } => {
                let (s, c) = yaw.sin_cos();
                let o = origin - center;
                let lo = Vector3::new(c * o.x + s * o.y, -s * o.x + c * o.y, o.z);
                let ld = Vector3::new(c * dir.x + s * dir.y, -s * dir.x + c * dir.y, dir.z);
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for a in 0..3 {
                    if ld[a].abs() < 1e-300 {
                        if lo[a].abs() > half[a] {
                            return None;
                        }
                        continue;
                    }
                    let inv = 1.0 / ld[a];
                    let (mut ta, mut tb) = ((-half[a] - lo[a]) * inv, (half[a] - lo[a]) * inv);
                    if ta > tb {
                        std::mem::swap(&mut ta, &mut tb);
                    }
                    t0 = t0.max(ta);
                    t1 = t1.min(tb);
                }
                if t0 > t1 {
                    return None;
                }
                if t0 > T_MIN {
                    Some(t0)
                } else if t1 > T_MIN {
                    Some(t1)
                } else {
                    None
                }
            }
            Shape::Cylinder { base, radius, height } => {
                let (ox, oy) = (origin.x - base.x, origin.y - base.y);
                let a = dir.x * dir.x + dir.y * dir.y;
                if a < 1e-300 {
                    return None;
                }
                let b = 2.0 * (ox * dir.x + oy * dir.y);
                let cc = ox * ox + oy * oy - radius * radius;
                let disc = b * b - 4.0 * a * cc;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                    let z = origin.z + t * dir.z;
                    if t > T_MIN && z >= base.z && z <= base.z + height {
                        return Some(t);
                    }
                }
                None
            }
            Shape::Sphere { center, radius } => {
                let o = origin - center;
                let a = dir.norm_squared();
                let b = 2.0 * o.dot(dir);
                let cc = o.norm_squared() - radius * radius;
                let disc = b * b - 4.0 * a * cc;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)]
                    .into_iter()
                    .find(|&t| t > T_MIN)
            }
        }
    }

    /// Corners of an axis-aligned box enclosing the primitive.
    pub fn bounds(&self) -> (Point3<f64>, Point3<f64>) {
        match self.shape {
            Shape::Box { center, yaw, half, .. } => {
                let (s, c) = yaw.sin_cos();
                let ex = (c * half.x).abs() + (s * half.y).abs();
                let ey = (s * half.x).abs() + (c * half.y).abs();
                let e = Vector3::new(ex, ey, half.z);
                (center - e, center + e)
            }
            Shape::Cylinder { base, radius, height } => (
                Point3::new(base.x - radius, base.y - radius, base.z),
                Point3::new(base.x + radius, base.y + radius, base.z + height),
            ),
            Shape::Sphere { center, radius } => {
                let e = Vector3::repeat(radius);
                (center - e, center + e)
            }
        }
    }
}
