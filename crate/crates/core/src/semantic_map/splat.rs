use nalgebra::Point3;
use rayon::prelude::*;

use super::SemanticPointCloud;
use crate::error::{Error, Result};
use crate::geometry::Pose;

/// Per-class splat square side in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct SplatTable {
    sizes: Vec<f64>,
    pub s_min: f64,
    pub s_max: f64,
}

impl SplatTable {
    /// Every class gets `size`.
    pub fn uniform(size: f64) -> Self {
        SplatTable {
            sizes: vec![size; 256],
            s_min: size,
            s_max: size,
        }
    }

    /// Table with all classes at `s_min`, then the given overrides.
    pub fn from_entries(s_min: f64, s_max: f64, entries: &[(u8, f64)]) -> Result<Self> {
        if !(s_min > 0.0 && s_max >= s_min && s_max.is_finite()) {
            return Err(Error::invalid(format!("invalid splat range [{s_min}, {s_max}]")));
        }
        let mut sizes = vec![s_min; 256];
        for &(c, s) in entries {
            if !(s >= s_min && s <= s_max) {
                return Err(Error::invalid(format!(
                    "splat size {s} for class {c} outside [{s_min}, {s_max}]"
                )));
            }
            sizes[c as usize] = s;
        }
        Ok(SplatTable { sizes, s_min, s_max })
    }

    #[inline]
    pub fn size(&self, class_id: u8) -> f64 {
        self.sizes[class_id as usize]
    }

    pub fn set(&mut self, class_id: u8, size: f64) {
        self.sizes[class_id as usize] = size;
    }

    /// Entries that differ from `s_min`, ascending by class id.
    pub fn entries(&self) -> Vec<(u8, f64)> {
        (0..=255u8)
            .filter(|&c| self.sizes[c as usize] != self.s_min)
            .map(|c| (c, self.sizes[c as usize]))
            .collect()
    }
}

/// Static 3-d tree over a small point set, for exact nearest-neighbor queries.
struct KdTree {
    nodes: Vec<(Point3<f64>, u8)>,
}

impl KdTree {
    fn build(points: &[Point3<f64>]) -> Self {
        let mut pts: Vec<Point3<f64>> = points.to_vec();
        let mut nodes = Vec::with_capacity(pts.len());
        Self::build_rec(&mut pts, 0, &mut nodes);
        KdTree { nodes }
    }

    // Nodes are laid out in pre-order with the median at the front of each range.
    fn build_rec(pts: &mut [Point3<f64>], depth: usize, out: &mut Vec<(Point3<f64>, u8)>) {
        if pts.is_empty() {
            return;
        }
        let axis = depth % 3;
        pts.sort_by(|a, b| a[axis].total_cmp(&b[axis]));
        let mid = pts.len() / 2;
        out.push((pts[mid], axis as u8));
        let (left, rest) = pts.split_at_mut(mid);
        Self::build_rec(left, depth + 1, out);
        Self::build_rec(&mut rest[1..], depth + 1, out);
    }

    fn nearest_dist2(&self, q: &Point3<f64>) -> f64 {
        let mut best = f64::INFINITY;
        self.search(0, self.nodes.len(), q, &mut best);
        best
    }

    fn search(&self, start: usize, len: usize, q: &Point3<f64>, best: &mut f64) {
        if len == 0 {
            return;
        }
        let mid = len / 2;
        let (p, axis) = self.nodes[start];
        let d2 = (p - q).norm_squared();
        if d2 < *best {
            *best = d2;
        }
        let diff = q[axis as usize] - p[axis as usize];
        let left = (start + 1, mid);
        let right = (start + 1 + mid, len - mid - 1);
        let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
        self.search(near.0, near.1, q, best);
        if diff * diff < *best {
            self.search(far.0, far.1, q, best);
        }
    }
}

const CHUNK: usize = 1 << 16;

/// Sizes each class's splat from its mean distance to the trajectory.
///
/// `m_c` is the mean over points of class `c` of the distance to the nearest
/// trajectory camera center. The `m_c` are mapped affinely so the smallest
/// lands on `s_min` and the largest on `s_max`; if they are all equal every
/// populated class gets the midpoint. Classes without points get `s_min`.
pub fn compute_splat_sizes(
    map: &SemanticPointCloud,
    trajectory: &[Pose],
    s_min: f64,
    s_max: f64,
) -> Result<SplatTable> {
    if trajectory.is_empty() {
        return Err(Error::invalid("splat sizing needs a non-empty trajectory"));
    }
    if map.is_empty() {
        return Err(Error::EmptyMap);
    }
    let mut table = SplatTable::from_entries(s_min, s_max, &[])?;
    let centers: Vec<Point3<f64>> = trajectory.iter().map(|p| p.center()).collect();
    let tree = KdTree::build(&centers);

    // Fixed-size chunks summed in order keep the result independent of the
    // thread count.
    let partials: Vec<(Vec<f64>, Vec<u64>)> = map
        .points
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut sum = vec![0.0f64; 256];
            let mut cnt = vec![0u64; 256];
            for p in chunk {
                let q = p.position.cast::<f64>();
                sum[p.class_id as usize] += tree.nearest_dist2(&q).sqrt();
                cnt[p.class_id as usize] += 1;
            }
            (sum, cnt)
        })
        .collect();
    let mut sum = vec![0.0f64; 256];
    let mut cnt = vec![0u64; 256];
    for (s, c) in partials {
        for i in 0..256 {
            sum[i] += s[i];
            cnt[i] += c[i];
        }
    }
    let means: Vec<(u8, f64)> = (0..256)
        .filter(|&i| cnt[i] > 0)
        .map(|i| (i as u8, sum[i] / cnt[i] as f64))
        .collect();
    let lo = means.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
    let hi = means.iter().map(|m| m.1).fold(f64::NEG_INFINITY, f64::max);
    for &(c, m) in &means {
        let s = if hi > lo {
            s_min + (m - lo) / (hi - lo) * (s_max - s_min)
        } else {
            0.5 * (s_min + s_max)
        };
        table.set(c, s.clamp(s_min, s_max));
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantic_map::SemanticPoint;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(x: f32, y: f32, z: f32, c: u8) -> SemanticPoint {
        SemanticPoint::new(Point3::new(x, y, z), c, 0)
    }

    fn at(x: f64, y: f64, z: f64) -> Pose {
        Pose::new(Default::default(), Vector3::new(x, y, z))
    }

    #[test]
    fn two_classes_span_the_range() {
        let map = SemanticPointCloud::new(vec![pt(10.0, 0.0, 0.0, 1), pt(0.0, 50.0, 0.0, 14)], 1);
        let t = compute_splat_sizes(&map, &[at(0.0, 0.0, 0.0)], 0.025, 0.05).unwrap();
        assert_abs_diff_eq!(t.size(1), 0.025, epsilon = 1e-12);
        assert_abs_diff_eq!(t.size(14), 0.05, epsilon = 1e-12);
        assert_eq!(t.size(7), 0.025);
    }

    #[test]
    fn linear_in_mean_distance() {
        let map = SemanticPointCloud::new(
            vec![pt(10.0, 0.0, 0.0, 1), pt(30.0, 0.0, 0.0, 2), pt(50.0, 0.0, 0.0, 3)],
            1,
        );
        let t = compute_splat_sizes(&map, &[at(0.0, 0.0, 0.0)], 0.025, 0.05).unwrap();
        assert_abs_diff_eq!(t.size(2), 0.0375, epsilon = 1e-12);
    }

    #[test]
    fn equal_means_map_to_midpoint() {
        let map = SemanticPointCloud::new(vec![pt(5.0, 0.0, 0.0, 1), pt(0.0, 5.0, 0.0, 2)], 1);
        let t = compute_splat_sizes(&map, &[at(0.0, 0.0, 0.0)], 0.025, 0.05).unwrap();
        assert_abs_diff_eq!(t.size(1), 0.0375, epsilon = 1e-12);
        assert_abs_diff_eq!(t.size(2), 0.0375, epsilon = 1e-12);
    }

    #[test]
    fn nearest_pose_is_used() {
        let map = SemanticPointCloud::new(vec![pt(100.0, 0.0, 0.0, 1), pt(0.0, 3.0, 0.0, 2)], 1);
        let traj = [at(0.0, 0.0, 0.0), at(99.0, 0.0, 0.0)];
        let t = compute_splat_sizes(&map, &traj, 0.025, 0.05).unwrap();
        // class 1 is 1 m from the second pose, class 2 is 3 m from the first
        assert_abs_diff_eq!(t.size(1), 0.025, epsilon = 1e-12);
        assert_abs_diff_eq!(t.size(2), 0.05, epsilon = 1e-12);
    }

    #[test]
    fn empty_trajectory_is_an_error() {
        let map = SemanticPointCloud::new(vec![pt(0.0, 0.0, 0.0, 1)], 1);
        assert!(compute_splat_sizes(&map, &[], 0.025, 0.05).is_err());
    }

    #[test]
    fn kd_tree_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Point3<f64>> = (0..300)
            .map(|_| {
                Point3::new(
                    rng.gen_range(-50.0..50.0),
                    rng.gen_range(-50.0..50.0),
                    rng.gen_range(0.0..3.0),
                )
            })
            .collect();
        let tree = KdTree::build(&pts);
        for _ in 0..500 {
            let q = Point3::new(
                rng.gen_range(-60.0..60.0),
                rng.gen_range(-60.0..60.0),
                rng.gen_range(-5.0..5.0),
            );
            let brute = pts.iter().map(|p| (p - q).norm_squared()).fold(f64::INFINITY, f64::min);
            assert_eq!(tree.nearest_dist2(&q), brute);
        }
    }

    #[test]
    fn ordering_follows_mean_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<_> = (0..2000)
            .map(|_| {
                let c = rng.gen_range(1..8u8);
                let r = c as f32 * 4.0 + rng.gen_range(0.0..6.0);
                let a: f32 = rng.gen_range(0.0..std::f32::consts::TAU);
                pt(r * a.cos(), r * a.sin(), 0.0, c)
            })
            .collect();
        let map = SemanticPointCloud::new(pts.clone(), 1);
        let t = compute_splat_sizes(&map, &[at(0.0, 0.0, 0.0)], 0.025, 0.05).unwrap();
        let mean = |c: u8| {
            let ds: Vec<f64> = pts
                .iter()
                .filter(|p| p.class_id == c)
                .map(|p| p.position.coords.cast::<f64>().norm())
                .collect();
            ds.iter().sum::<f64>() / ds.len() as f64
        };
        for a in 1..8u8 {
            for b in 1..8u8 {
                if mean(a) > mean(b) {
                    assert!(t.size(a) >= t.size(b));
                }
            }
            assert!((0.025..=0.05).contains(&t.size(a)));
        }
    }
}
