//! Point-splatting rasterizer for label and depth maps.
//!
//! Each map point becomes a screen-space square of side `s_c * fx / z`
//! pixels (clamped to `[1, 64]`) at constant depth `z`. A pixel covered by
//! several splats takes the one with the smallest depth; exact depth ties go
//! to the smaller map index. The z-buffer stores `(depth bits << 32) | index`
//! and is updated with an atomic minimum, so the result is the same for any
//! thread count and any processing order.

mod raster;

pub use raster::{DepthMap, LabelMap};

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{Matrix3, Point3, Vector3};
use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::error::Result;
use crate::geometry::{CameraIntrinsics, Pose, Z_NEAR};
use crate::semantic_map::{SemanticPoint, SemanticPointCloud, SplatTable, VOID};

/// Points farther than this camera-space depth are culled.
pub const FAR_PLANE: f64 = 300.0;
pub const MIN_SPLAT_PX: f32 = 1.0;
pub const MAX_SPLAT_PX: f32 = 64.0;

/// Horizontal edge of the culling chunks in meters.
const CHUNK_EDGE: f64 = 8.0;
const EMPTY: u64 = u64::MAX;

#[derive(Clone, Copy, Debug)]
struct Chunk {
    start: usize,
    end: usize,
    min: [f32; 3],
    max: [f32; 3],
}

/// A map prepared for repeated rendering.
///
/// Points are regrouped into spatial chunks for frustum culling but keep
/// their original map indices for z-buffer tie-breaking.
pub struct RenderIndex {
    xs: Vec<f32>,
    ys: Vec<f32>,
    zs: Vec<f32>,
    classes: Vec<u8>,
    /// World-frame half axes of each point's surfel; `None` draws squares.
    surfels: Option<Vec<[f32; 9]>>,
    ids: Vec<u32>,
    chunks: Vec<Chunk>,
    /// Class of each original map index.
    class_of: Vec<u8>,
    splat: [f32; 256],
}

/// Label and depth rasters from one rendering pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Rendered {
    pub labels: LabelMap,
    pub depth: DepthMap,
}

impl RenderIndex {
    pub fn new(map: &SemanticPointCloud, splats: &SplatTable) -> Self {
        let ids: Vec<u32> = (0..map.len() as u32).collect();
        Self::from_subset(&map.points, &ids, splats, None)
    }

    /// Index over a thinned map for coarse, fast renders.
    ///
    /// Each class present in a `voxel`-sized cell is replaced by one surfel at
    /// the centroid of its members. The surfel is the box spanned by the
    /// principal axes of the members' spread (plus half the class splat), and
    /// it covers the screen-space bounding box of its projection. Unlike an
    /// enlarged square, a flat ground patch seen at a grazing angle then
    /// stays flat on screen, so thinning does not shift class boundaries.
    pub fn voxel_proxy(map: &SemanticPointCloud, splats: &SplatTable, voxel: f64) -> Self {
        #[derive(Default)]
        struct Cell {
            first: u32,
            n: u32,
            sum: Vector3<f64>,
            outer: Matrix3<f64>,
        }
        let inv = 1.0 / voxel;
        let mut cells: FxHashMap<(i32, i32, i32, u8), Cell> = FxHashMap::default();
        for (i, p) in map.points.iter().enumerate() {
            let q = p.position.cast::<f64>();
            let key = (
                (q.x * inv).floor() as i32,
                (q.y * inv).floor() as i32,
                (q.z * inv).floor() as i32,
                p.class_id,
            );
            // Sums relative to the cell corner keep the covariance well
            // conditioned far from the origin.
            let corner = Vector3::new(key.0 as f64, key.1 as f64, key.2 as f64) * voxel;
            let d = q.coords - corner;
            let c = cells.entry(key).or_insert_with(|| Cell {
                first: i as u32,
                ..Default::default()
            });
            c.n += 1;
            c.sum += d;
            c.outer += d * d.transpose();
        }
        let mut reps: Vec<(u32, SemanticPoint, [f32; 9])> = cells
            .into_iter()
            .map(|((x, y, z, class), c)| {
                let n = c.n as f64;
                let mean = c.sum / n;
                let cov = c.outer / n - mean * mean.transpose();
                let eig = cov.symmetric_eigen();
                let margin = 0.5 * splats.size(class);
                let mut axes = [0f32; 9];
                for a in 0..3 {
                    let half = (3.0 * eig.eigenvalues[a].max(0.0)).sqrt() + margin;
                    let v = eig.eigenvectors.column(a) * half;
                    for b in 0..3 {
                        axes[3 * a + b] = v[b] as f32;
                    }
                }
                let corner = Vector3::new(x as f64, y as f64, z as f64) * voxel;
                let center = Point3::from(corner + mean);
                (c.first, SemanticPoint::new(center.cast::<f32>(), class, 0), axes)
            })
            .collect();
        reps.sort_unstable_by_key(|r| r.0);
        let points: Vec<SemanticPoint> = reps.iter().map(|r| r.1).collect();
        let axes: Vec<[f32; 9]> = reps.iter().map(|r| r.2).collect();
        let ids: Vec<u32> = (0..points.len() as u32).collect();
        Self::from_subset(&points, &ids, splats, Some(&axes))
    }

    fn from_subset(points: &[SemanticPoint], ids: &[u32], splats: &SplatTable, surfels: Option<&[[f32; 9]]>) -> Self {
        let key_of = |p: &SemanticPoint| {
            (
                (p.position.x as f64 / CHUNK_EDGE).floor() as i32,
                (p.position.y as f64 / CHUNK_EDGE).floor() as i32,
            )
        };
        let mut order: Vec<u32> = ids.to_vec();
        order.sort_by_key(|&i| (key_of(&points[i as usize]), i));

        let n = order.len();
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        let mut zs = Vec::with_capacity(n);
        let mut classes = Vec::with_capacity(n);
        let mut chunks = Vec::new();
        let mut start = 0;
        while start < n {
            let key = key_of(&points[order[start] as usize]);
            let mut end = start;
            let mut min = [f32::INFINITY; 3];
            let mut max = [f32::NEG_INFINITY; 3];
            while end < n && key_of(&points[order[end] as usize]) == key {
                let p = &points[order[end] as usize];
                // Surfels reach past their centers.
                let reach = surfels.map_or(0.0, |s| {
                    let a = &s[order[end] as usize];
                    (0..3)
                        .map(|b| a[b].abs() + a[3 + b].abs() + a[6 + b].abs())
                        .fold(0.0, f32::max)
                });
                for a in 0..3 {
                    min[a] = min[a].min(p.position[a] - reach);
                    max[a] = max[a].max(p.position[a] + reach);
                }
                xs.push(p.position.x);
                ys.push(p.position.y);
                zs.push(p.position.z);
                classes.push(p.class_id);
                end += 1;
            }
            chunks.push(Chunk { start, end, min, max });
            start = end;
        }
        let mut splat = [0f32; 256];
        for (c, s) in splat.iter_mut().enumerate() {
            *s = splats.size(c as u8) as f32;
        }
        RenderIndex {
            xs,
            ys,
            zs,
            classes,
            surfels: surfels.map(|s| order.iter().map(|&i| s[i as usize]).collect()),
            ids: order,
            chunks,
            class_of: points.iter().map(|p| p.class_id).collect(),
            splat,
        }
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    fn chunk_visible(&self, c: &Chunk, view: &View) -> bool {
        let mut corners = [Vector3::zeros(); 8];
        for (n, corner) in corners.iter_mut().enumerate() {
            let p = Point3::new(
                if n & 1 == 0 { c.min[0] } else { c.max[0] } as f64,
                if n & 2 == 0 { c.min[1] } else { c.max[1] } as f64,
                if n & 4 == 0 { c.min[2] } else { c.max[2] } as f64,
            );
            *corner = view.pose.world_to_camera(&p);
        }
        let k = &view.k;
        let m = (MAX_SPLAT_PX / 2.0) as f64 + 0.5;
        let planes: [(f64, f64, f64, f64); 6] = [
            (0.0, 0.0, 1.0, -Z_NEAR),
            (0.0, 0.0, -1.0, FAR_PLANE),
            (k.fx, 0.0, k.cx + m, 0.0),
            (-k.fx, 0.0, k.width as f64 - k.cx + m, 0.0),
            (0.0, k.fy, k.cy + m, 0.0),
            (0.0, -k.fy, k.height as f64 - k.cy + m, 0.0),
        ];
        planes
            .iter()
            .all(|&(a, b, cz, d)| corners.iter().any(|p| a * p.x + b * p.y + cz * p.z + d >= 0.0))
    }

    fn rasterize(&self, pose: &Pose, k: &CameraIntrinsics) -> Vec<AtomicU64> {
        let (w, h) = (k.width, k.height);
        let zbuf: Vec<AtomicU64> = (0..w * h).map(|_| AtomicU64::new(EMPTY)).collect();
        let view = View { pose: *pose, k: *k };
        let visible: Vec<&Chunk> = self.chunks.iter().filter(|c| self.chunk_visible(c, &view)).collect();

        let r = pose.rotation_matrix().transpose();
        let rot: [[f32; 3]; 3] = [
            [r[(0, 0)] as f32, r[(0, 1)] as f32, r[(0, 2)] as f32],
            [r[(1, 0)] as f32, r[(1, 1)] as f32, r[(1, 2)] as f32],
            [r[(2, 0)] as f32, r[(2, 1)] as f32, r[(2, 2)] as f32],
        ];
        let t = pose.translation();
        let (tx, ty, tz) = (t.x as f32, t.y as f32, t.z as f32);
        let (fx, fy, cx, cy) = (k.fx as f32, k.fy as f32, k.cx as f32, k.cy as f32);
        let mut side_k = [0f32; 256];
        for (c, s) in side_k.iter_mut().enumerate() {
            *s = self.splat[c] * fx;
        }
        let (near, far) = (Z_NEAR as f32, FAR_PLANE as f32);
        let (wi, hi) = (w as i32, h as i32);

        visible.par_iter().for_each(|c| {
            for n in c.start..c.end {
                let dx = self.xs[n] - tx;
                let dy = self.ys[n] - ty;
                let dz = self.zs[n] - tz;
                let z = rot[2][0] * dx + rot[2][1] * dy + rot[2][2] * dz;
                if z <= near || z > far {
                    continue;
                }
                let x = rot[0][0] * dx + rot[0][1] * dy + rot[0][2] * dz;
                let y = rot[1][0] * dx + rot[1][1] * dy + rot[1][2] * dz;
                let inv_z = 1.0 / z;
                let u = fx * x * inv_z + cx;
                let v = fy * y * inv_z + cy;
                let (hu, hv) = match &self.surfels {
                    None => {
                        let half = 0.5 * (side_k[self.classes[n] as usize] * inv_z).clamp(MIN_SPLAT_PX, MAX_SPLAT_PX);
                        (half, half)
                    }
                    Some(s) => {
                        // Screen bounding box of the projected surfel.
                        let (mut hu, mut hv) = (0.0f32, 0.0f32);
                        for a in s[n].chunks_exact(3) {
                            let ax = rot[0][0] * a[0] + rot[0][1] * a[1] + rot[0][2] * a[2];
                            let ay = rot[1][0] * a[0] + rot[1][1] * a[1] + rot[1][2] * a[2];
                            let az = rot[2][0] * a[0] + rot[2][1] * a[1] + rot[2][2] * a[2];
                            hu += (fx * inv_z * (ax - x * inv_z * az)).abs();
                            hv += (fy * inv_z * (ay - y * inv_z * az)).abs();
                        }
                        let lim = 0.5 * MAX_SPLAT_PX;
                        (hu.clamp(0.5 * MIN_SPLAT_PX, lim), hv.clamp(0.5 * MIN_SPLAT_PX, lim))
                    }
                };
                // Pixel centers in (u - hu, u + hu] and (v - hv, v + hv].
                let i0 = ((u - hu).floor() as i32 + 1).max(0);
                let i1 = ((u + hu).floor() as i32).min(wi - 1);
                let j0 = ((v - hv).floor() as i32 + 1).max(0);
                let j1 = ((v + hv).floor() as i32).min(hi - 1);
                if i0 > i1 || j0 > j1 {
                    continue;
                }
                let key = ((z.to_bits() as u64) << 32) | self.ids[n] as u64;
                for j in j0..=j1 {
                    let row = j as usize * w;
                    for i in i0..=i1 {
                        let cell = &zbuf[row + i as usize];
                        if key < cell.load(Ordering::Relaxed) {
                            cell.fetch_min(key, Ordering::Relaxed);
                        }
                    }
                }
            }
        });
        zbuf
    }

    /// Renders labels and depth in one pass.
    pub fn render(&self, pose: &Pose, k: &CameraIntrinsics) -> Rendered {
        let zbuf = self.rasterize(pose, k);
        let mut labels = Vec::with_capacity(zbuf.len());
        let mut depth = Vec::with_capacity(zbuf.len());
        for cell in zbuf {
            let key = cell.into_inner();
            if key == EMPTY {
                labels.push(VOID);
                depth.push(0.0);
            } else {
                labels.push(self.class_of[(key & 0xffff_ffff) as usize]);
                depth.push(f32::from_bits((key >> 32) as u32));
            }
        }
        Rendered {
            labels: LabelMap::from_raw(k.width, k.height, labels).expect("sized by intrinsics"),
            depth: DepthMap::from_raw(k.width, k.height, depth).expect("finite positive depths"),
        }
    }

    pub fn render_labels(&self, pose: &Pose, k: &CameraIntrinsics) -> LabelMap {
        let zbuf = self.rasterize(pose, k);
        let labels = zbuf
            .into_iter()
            .map(|cell| {
                let key = cell.into_inner();
                if key == EMPTY {
                    VOID
                } else {
                    self.class_of[(key & 0xffff_ffff) as usize]
                }
            })
            .collect();
        LabelMap::from_raw(k.width, k.height, labels).expect("sized by intrinsics")
    }
}

struct View {
    pose: Pose,
    k: CameraIntrinsics,
}

/// Renders the semantic label map seen from `pose`.
pub fn render_label_map(map: &SemanticPointCloud, splats: &SplatTable, pose: &Pose, k: &CameraIntrinsics) -> LabelMap {
    RenderIndex::new(map, splats).render_labels(pose, k)
}

/// Renders camera-space depth with the same rasterization as the labels.
pub fn render_depth_map(map: &SemanticPointCloud, splats: &SplatTable, pose: &Pose, k: &CameraIntrinsics) -> DepthMap {
    RenderIndex::new(map, splats).render(pose, k).depth
}

/// Lifts every valid, non-void pixel back to a labelled world point.
pub fn backproject_depth(
    depth: &DepthMap,
    labels: &LabelMap,
    pose: &Pose,
    k: &CameraIntrinsics,
) -> Result<SemanticPointCloud> {
    labels.check_same_dims(depth.width(), depth.height())?;
    let mut points = Vec::new();
    for j in 0..depth.height() {
        for i in 0..depth.width() {
            let d = depth.get(i, j);
            let c = labels.get(i, j);
            if d > 0.0 && c != VOID {
                let x = crate::geometry::backproject(i as f64, j as f64, d as f64, pose, k);
                points.push(SemanticPoint::new(x.cast::<f32>(), c, 0));
            }
        }
    }
    Ok(SemanticPointCloud::new(points, 1))
}
