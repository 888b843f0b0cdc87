use nalgebra::Point3;
use rayon::prelude::*;
use rustc_hash::FxHashMap;

use super::{SemanticPoint, SemanticPointCloud};
use crate::error::{Error, Result};

/// Uniform voxel hash over a point set.
///
/// Point indices are bucketed by cell; within a cell they stay in ascending
/// index order. Lookups of all points within distance `< cell` of a query
/// only need the 27 cells around the query's own cell.
pub struct VoxelHash {
    inv_cell: f64,
    order: Vec<u32>,
    cells: FxHashMap<(i32, i32, i32), (u32, u32)>,
}

impl VoxelHash {
    pub fn build(points: &[Point3<f32>], cell: f64) -> Self {
        let inv_cell = 1.0 / cell;
        let keys: Vec<(i32, i32, i32)> = points.par_iter().map(|p| Self::key_with(inv_cell, p)).collect();
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        order.par_sort_by_key(|&i| (keys[i as usize], i));
        let mut cells = FxHashMap::default();
        let mut start = 0usize;
        while start < order.len() {
            let key = keys[order[start] as usize];
            let mut end = start + 1;
            while end < order.len() && keys[order[end] as usize] == key {
                end += 1;
            }
            cells.insert(key, (start as u32, (end - start) as u32));
            start = end;
        }
        VoxelHash { inv_cell, order, cells }
    }

    #[inline]
    fn key_with(inv_cell: f64, p: &Point3<f32>) -> (i32, i32, i32) {
        (
            (p.x as f64 * inv_cell).floor() as i32,
            (p.y as f64 * inv_cell).floor() as i32,
            (p.z as f64 * inv_cell).floor() as i32,
        )
    }

    #[inline]
    pub fn key(&self, p: &Point3<f32>) -> (i32, i32, i32) {
        Self::key_with(self.inv_cell, p)
    }

    /// Indices stored in one cell, in ascending order.
    pub fn cell(&self, key: (i32, i32, i32)) -> &[u32] {
        match self.cells.get(&key) {
            Some(&(s, n)) => &self.order[s as usize..(s + n) as usize],
            None => &[],
        }
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Visits candidate indices from the 27 cells around `p`. Stops early when
    /// the visitor returns `false`.
    pub fn for_each_candidate(&self, p: &Point3<f32>, mut visit: impl FnMut(u32) -> bool) {
        let (cx, cy, cz) = self.key(p);
        // Own cell first: that is where matches usually are.
        for &i in self.cell((cx, cy, cz)) {
            if !visit(i) {
                return;
            }
        }
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    for &i in self.cell((cx + dx, cy + dy, cz + dz)) {
                        if !visit(i) {
                            return;
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn dist2(a: &Point3<f32>, b: &Point3<f32>) -> f64 {
    let dx = a.x as f64 - b.x as f64;
    let dy = a.y as f64 - b.y as f64;
    let dz = a.z as f64 - b.z as f64;
    dx * dx + dy * dy + dz * dz
}

/// Removes points with low temporal consistency across scan rounds.
///
/// A point of round `j` is kept iff the fraction of rounds `i` (including
/// `j` itself) holding some point strictly closer than `eps_d` is at least
/// `delta`. Output is the union of kept points, round by round, in input
/// order; each point's `round_id` is its round's index in `rounds`.
pub fn temporal_consistency_filter(
    rounds: &[SemanticPointCloud],
    delta: f64,
    eps_d: f64,
) -> Result<SemanticPointCloud> {
    if rounds.is_empty() {
        return Err(Error::invalid("temporal filter needs at least one round"));
    }
    if !(eps_d.is_finite() && eps_d > 0.0) {
        return Err(Error::invalid(format!("eps_d must be positive, got {eps_d}")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!("delta must be in (0, 1], got {delta}")));
    }
    if rounds.len() > 255 {
        return Err(Error::invalid("at most 255 rounds are supported"));
    }
    let r = rounds.len();
    let needed = (1..=r).find(|&c| c as f64 / r as f64 >= delta).unwrap_or(r);

    let merged = SemanticPointCloud::merge_rounds(rounds);
    let positions: Vec<Point3<f32>> = merged.points.iter().map(|p| p.position).collect();
    // A hair above eps_d so that rounding in the cell-index division can never
    // push a qualifying neighbor two cells away.
    let index = VoxelHash::build(&positions, eps_d * (1.0 + 1e-9));
    let eps2 = eps_d * eps_d;
    let round_of: Vec<u8> = merged.points.iter().map(|p| p.round_id).collect();

    let keep: Vec<bool> = positions
        .par_iter()
        .with_min_len(4096)
        .map(|p| {
            let mut seen = [0u64; 4];
            let mut count = 0usize;
            index.for_each_candidate(p, |i| {
                let rid = round_of[i as usize] as usize;
                let (word, bit) = (rid / 64, 1u64 << (rid % 64));
                if seen[word] & bit == 0 && dist2(p, &positions[i as usize]) < eps2 {
                    seen[word] |= bit;
                    count += 1;
                }
                count < needed
            });
            count >= needed
        })
        .collect();

    let points: Vec<SemanticPoint> = merged
        .points
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(p, _)| *p)
        .collect();
    Ok(SemanticPointCloud::new(points, r as u8))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(pts: &[[f32; 3]]) -> SemanticPointCloud {
        SemanticPointCloud::new(
            pts.iter().map(|p| SemanticPoint::new(Point3::from(*p), 1, 0)).collect(),
            1,
        )
    }

    /// All-pairs reference for the keep rule.
    fn brute_force(rounds: &[SemanticPointCloud], delta: f64, eps_d: f64) -> Vec<bool> {
        let r = rounds.len();
        let mut keep = Vec::new();
        for round in rounds {
            for p in &round.points {
                let mut support = 0usize;
                for other in rounds {
                    let hit = other.points.iter().any(|q| {
                        let dx = p.position.x as f64 - q.position.x as f64;
                        let dy = p.position.y as f64 - q.position.y as f64;
                        let dz = p.position.z as f64 - q.position.z as f64;
                        dx * dx + dy * dy + dz * dz < eps_d * eps_d
                    });
                    support += hit as usize;
                }
                keep.push(support as f64 / r as f64 >= delta);
            }
        }
        keep
    }

    fn random_rounds(rng: &mut ChaCha8Rng, n_rounds: usize, n: usize, extent: f32) -> Vec<SemanticPointCloud> {
        (0..n_rounds)
            .map(|_| {
                let pts: Vec<[f32; 3]> = (0..n)
                    .map(|_| {
                        [
                            rng.gen_range(0.0..extent),
                            rng.gen_range(0.0..extent),
                            rng.gen_range(0.0..extent * 0.2),
                        ]
                    })
                    .collect();
                cloud(&pts)
            })
            .collect()
    }

    #[test]
    fn same_point_in_all_rounds_is_kept() {
        let rounds: Vec<_> = (0..6).map(|_| cloud(&[[1.0, 2.0, 3.0]])).collect();
        let out = temporal_consistency_filter(&rounds, 0.6, 0.025).unwrap();
        assert_eq!(out.len(), 6);
    }

    #[test]
    fn lone_point_is_removed() {
        let mut rounds: Vec<_> = (0..6).map(|_| cloud(&[[0.0, 0.0, 0.0]])).collect();
        rounds[2]
            .points
            .push(SemanticPoint::new(Point3::new(1.0, 0.0, 0.0), 1, 0));
        let out = temporal_consistency_filter(&rounds, 0.6, 0.025).unwrap();
        assert_eq!(out.len(), 6);
        assert!(out.points.iter().all(|p| p.position.x == 0.0));
    }

    #[test]
    fn four_of_six_rounds_suffice() {
        // 4/6 = 0.667 >= 0.6 but 3/6 = 0.5 is not.
        let mut rounds: Vec<_> = (0..6).map(|_| cloud(&[])).collect();
        for r in rounds.iter_mut().take(4) {
            r.points.push(SemanticPoint::new(Point3::new(0.0, 0.0, 0.0), 1, 0));
        }
        rounds[4]
            .points
            .push(SemanticPoint::new(Point3::new(5.0, 0.0, 0.0), 1, 0));
        for r in rounds.iter_mut().take(3) {
            r.points.push(SemanticPoint::new(Point3::new(5.01, 0.0, 0.0), 1, 0));
        }
        let out = temporal_consistency_filter(&rounds, 0.6, 0.025).unwrap();
        assert_eq!(out.points.iter().filter(|p| p.position.x == 0.0).count(), 4);
        // Point at 5.0 has 4 supporting rounds (itself + 3), the 5.01 ones too.
        assert_eq!(out.points.iter().filter(|p| p.position.x > 4.0).count(), 4);
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let rounds = random_rounds(&mut rng, 6, 300, 0.3);
            let expected = brute_force(&rounds, 0.6, 0.025);
            let out = temporal_consistency_filter(&rounds, 0.6, 0.025).unwrap();
            let expected_pts: Vec<_> = SemanticPointCloud::merge_rounds(&rounds)
                .points
                .into_iter()
                .zip(expected)
                .filter(|(_, k)| *k)
                .map(|(p, _)| p)
                .collect();
            assert_eq!(out.points, expected_pts);
            assert!(!out.is_empty());
        }
    }

    #[test]
    fn monotone_in_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let rounds = random_rounds(&mut rng, 5, 200, 0.4);
            let base = temporal_consistency_filter(&rounds, 0.6, 0.025).unwrap();
            let stricter = temporal_consistency_filter(&rounds, 0.8, 0.025).unwrap();
            let wider = temporal_consistency_filter(&rounds, 0.6, 0.04).unwrap();
            assert!(stricter.points.iter().all(|p| base.points.contains(p)));
            assert!(base.points.iter().all(|p| wider.points.contains(p)));
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let rounds = vec![cloud(&[[0.0; 3]]), cloud(&[[0.0; 3]])];
        assert!(temporal_consistency_filter(&[], 0.6, 0.025).is_err());
        assert!(temporal_consistency_filter(&rounds, 0.6, 0.0).is_err());
        assert!(temporal_consistency_filter(&rounds, 0.6, -1.0).is_err());
        assert!(temporal_consistency_filter(&rounds, 0.0, 0.025).is_err());
        assert!(temporal_consistency_filter(&rounds, 1.5, 0.025).is_err());
    }

    #[test]
    fn voxel_hash_candidates_cover_radius() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point3<f32>> = (0..2000)
            .map(|_| Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0))
            .collect();
        let hash = VoxelHash::build(&pts, 0.1);
        let q = Point3::new(0.05f32, -0.02, 0.0);
        let mut found = Vec::new();
        hash.for_each_candidate(&q, |i| {
            found.push(i);
            true
        });
        for (i, p) in pts.iter().enumerate() {
            if dist2(&q, p) < 0.01 {
                assert!(found.contains(&(i as u32)));
            }
        }
    }
}
