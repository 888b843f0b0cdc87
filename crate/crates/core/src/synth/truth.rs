//! Analytic label and depth rasters obtained by ray casting the generating
//! geometry. Independent of the point renderer.

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use super::SyntheticScene;
use crate::geometry::{CameraIntrinsics, Pose, Z_NEAR};
use crate::render::{DepthMap, LabelMap, FAR_PLANE};
use crate::semantic_map::VOID;

/// Pixel rectangle `[u0, u1) x [v0, v1)` a primitive may cover.
#[derive(Clone, Copy)]
struct ScreenBox {
    u0: usize,
    u1: usize,
    v0: usize,
    v1: usize,
}

fn screen_box(lo: &Point3<f64>, hi: &Point3<f64>, pose: &Pose, k: &CameraIntrinsics) -> Option<ScreenBox> {
    let mut corners = Vec::with_capacity(8);
    let mut behind = 0;
    let mut nearest = f64::INFINITY;
    for i in 0..8 {
        let c = Point3::new(
            if i & 1 == 0 { lo.x } else { hi.x },
            if i & 2 == 0 { lo.y } else { hi.y },
            if i & 4 == 0 { lo.z } else { hi.z },
        );
        let pc = pose.world_to_camera(&c);
        nearest = nearest.min((c - pose.center()).norm());
        if pc.z <= Z_NEAR {
            behind += 1;
        } else {
            corners.push(k.project_camera(&pc));
        }
    }
    if behind == 8 || nearest > FAR_PLANE * 2.0 {
        return None;
    }
    if behind > 0 {
        return Some(ScreenBox {
            u0: 0,
            u1: k.width,
            v0: 0,
            v1: k.height,
        });
    }
    let (mut umin, mut umax, mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (u, v) in corners {
        umin = umin.min(u);
        umax = umax.max(u);
        vmin = vmin.min(v);
        vmax = vmax.max(v);
    }
    let clamp = |x: f64, n: usize| x.clamp(0.0, n as f64) as usize;
    let b = ScreenBox {
        u0: clamp(umin.floor() - 1.0, k.width),
        u1: clamp(umax.ceil() + 2.0, k.width),
        v0: clamp(vmin.floor() - 1.0, k.height),
        v1: clamp(vmax.ceil() + 2.0, k.height),
    };
    (b.u0 < b.u1 && b.v0 < b.v1).then_some(b)
}

impl SyntheticScene {
    /// Class and camera depth of the first static surface hit by the ray
    /// through pixel `(u, v)`, if any lies within the near and far planes.
    pub fn cast_pixel(&self, pose: &Pose, k: &CameraIntrinsics, u: f64, v: f64) -> Option<(u8, f64)> {
        let dir = pose
            .rotation()
            .transform_vector(&Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0));
        let origin = pose.center();
        let mut best = self.ground_hit(&origin, &dir);
        for p in &self.primitives {
            if let Some(t) = p.intersect(&origin, &dir) {
                if (Z_NEAR..=FAR_PLANE).contains(&t) && best.is_none_or(|(_, d)| t < d) {
                    best = Some((p.class_id, t));
                }
            }
        }
        best
    }

    fn ground_hit(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<(u8, f64)> {
        if dir.z >= 0.0 {
            return None;
        }
        // `dir` has unit forward component, so the ray parameter is depth.
        let t = -origin.z / dir.z;
        if !(Z_NEAR..=FAR_PLANE).contains(&t) {
            return None;
        }
        let hit = origin + dir * t;
        self.ground_class(hit.x, hit.y).map(|c| (c, t))
    }

    /// Ground-truth labels and depths at `pose`.
    pub fn ground_truth(&self, pose: &Pose, k: &CameraIntrinsics) -> (LabelMap, DepthMap) {
        let boxes: Vec<Option<ScreenBox>> = self
            .primitives
            .iter()
            .map(|p| {
                let (lo, hi) = p.bounds();
                screen_box(&lo, &hi, pose, k)
            })
            .collect();
        let origin = pose.center();
        let rot = pose.rotation_matrix();
        let rows: Vec<(Vec<u8>, Vec<f32>)> = (0..k.height)
            .into_par_iter()
            .map(|j| {
                let mut labels = vec![VOID; k.width];
                let mut depth = vec![0.0f32; k.width];
                let mut best = vec![f64::INFINITY; k.width];
                let ray = |i: usize| rot * Vector3::new((i as f64 - k.cx) / k.fx, (j as f64 - k.cy) / k.fy, 1.0);
                for i in 0..k.width {
                    if let Some((c, t)) = self.ground_hit(&origin, &ray(i)) {
                        labels[i] = c;
                        best[i] = t;
                    }
                }
                for (p, b) in self.primitives.iter().zip(&boxes) {
                    let Some(b) = b else { continue };
                    if j < b.v0 || j >= b.v1 {
                        continue;
                    }
                    for i in b.u0..b.u1 {
                        if let Some(t) = p.intersect(&origin, &ray(i)) {
                            if (Z_NEAR..=FAR_PLANE).contains(&t) && t < best[i] {
                                best[i] = t;
                                labels[i] = p.class_id;
                            }
                        }
                    }
                }
                for i in 0..k.width {
                    if labels[i] != VOID {
                        depth[i] = best[i] as f32;
                    }
                }
                (labels, depth)
            })
            .collect();
        let mut labels = Vec::with_capacity(k.pixel_count());
        let mut depth = Vec::with_capacity(k.pixel_count());
        for (l, d) in rows {
            labels.extend(l);
            depth.extend(d);
        }
        (
            LabelMap::from_raw(k.width, k.height, labels).expect("sized raster"),
            DepthMap::from_raw(k.width, k.height, depth).expect("finite depths"),
        )
    }
}
