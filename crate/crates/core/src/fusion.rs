//! Final label maps: static render plus dynamic-object masks, sky and hole
//! filling.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::render::{DepthMap, LabelMap};
use crate::semantic_map::{ClassRegistry, VOID};

/// Binary object mask; `true` marks covered pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn set(&mut self, i: usize, j: usize, on: bool) {
        self.data[j * self.width + i] = on;
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[j * self.width + i]
    }
}

/// Where the sky starts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Horizon {
    /// Void pixels in rows strictly above this one become sky.
    Row(usize),
    /// The topmost row holding any valid depth; all rows if there is none.
    FromDepth,
}

/// Topmost image row with valid depth.
pub fn geometry_top_row(depth: &DepthMap) -> Option<usize> {
    (0..depth.height()).find(|&j| (0..depth.width()).any(|i| depth.get(i, j) > 0.0))
}

/// Merges the static render with dynamic masks (later masks win), then
/// labels remaining void pixels above the horizon as `sky_class` and fills
/// every other void pixel from its nearest labelled neighbor.
pub fn fuse_labels(
    static_labels: &LabelMap,
    depth: &DepthMap,
    masks: &[(Mask, u8)],
    horizon: Horizon,
    sky_class: u8,
    registry: &ClassRegistry,
) -> Result<LabelMap> {
    let (w, h) = static_labels.dims();
    static_labels.check_same_dims(depth.width(), depth.height())?;
    if !registry.contains(sky_class) {
        return Err(Error::UnregisteredClass(sky_class));
    }
    for (m, c) in masks {
        static_labels.check_same_dims(m.width, m.height)?;
        if !registry.contains(*c) {
            return Err(Error::UnregisteredClass(*c));
        }
    }
    let mut out = static_labels.clone();
    for (m, c) in masks {
        for (px, &on) in out.as_mut_slice().iter_mut().zip(&m.data) {
            if on {
                *px = *c;
            }
        }
    }
    let horizon_row = match horizon {
        Horizon::Row(r) => r,
        Horizon::FromDepth => geometry_top_row(depth).unwrap_or(h),
    };
    for j in 0..horizon_row.min(h) {
        for px in &mut out.as_mut_slice()[j * w..(j + 1) * w] {
            if *px == VOID {
                *px = sky_class;
            }
        }
    }
    Ok(inpaint_holes(&out))
}

/// Gives each void pixel the class of the nearest labelled pixel under
/// 4-connected BFS. Ties go to the source that is first in row-major order.
pub fn inpaint_holes(labels: &LabelMap) -> LabelMap {
    let (w, h) = labels.dims();
    let mut out = labels.clone();
    let data = out.as_mut_slice();
    let mut queue: VecDeque<usize> = (0..w * h).filter(|&n| data[n] != VOID).collect();
    while let Some(n) = queue.pop_front() {
        let (i, j) = (n % w, n / w);
        let c = data[n];
        let mut visit = |m: usize| {
            if data[m] == VOID {
                data[m] = c;
                queue.push_back(m);
            }
        };
        if i + 1 < w {
            visit(n + 1);
        }
        if i > 0 {
            visit(n - 1);
        }
        if j + 1 < h {
            visit(n + w);
        }
        if j > 0 {
            visit(n - w);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reg() -> ClassRegistry {
        ClassRegistry::street_default()
    }

    #[test]
    fn no_masks_no_voids_is_identity() {
        let l = LabelMap::filled(6, 4, 14);
        let d = DepthMap::from_raw(6, 4, vec![3.0; 24]).unwrap();
        assert_eq!(fuse_labels(&l, &d, &[], Horizon::FromDepth, 0, &reg()).unwrap(), l);
    }

    #[test]
    fn mask_overwrites_and_later_wins() {
        let l = LabelMap::filled(4, 4, 14);
        let d = DepthMap::from_raw(4, 4, vec![3.0; 16]).unwrap();
        let mut car = Mask::new(4, 4);
        car.set(1, 1, true);
        car.set(2, 1, true);
        let mut bus = Mask::new(4, 4);
        bus.set(2, 1, true);
        let out = fuse_labels(&l, &d, &[(car, 18), (bus, 22)], Horizon::FromDepth, 0, &reg()).unwrap();
        assert_eq!(out.get(1, 1), 18);
        assert_eq!(out.get(2, 1), 22);
        assert_eq!(out.get(0, 0), 14);
    }

    #[test]
    fn sky_above_horizon_and_holes_filled() {
        let mut l = LabelMap::new_void(5, 6);
        let mut d = DepthMap::new_invalid(5, 6);
        for j in 2..6 {
            for i in 0..5 {
                l.set(i, j, 14);
                d.set(i, j, 10.0);
            }
        }
        l.set(2, 4, VOID);
        d.set(2, 4, 0.0);
        let out = fuse_labels(&l, &d, &[], Horizon::FromDepth, 0, &reg()).unwrap();
        assert!((0..5).all(|i| out.get(i, 0) == 0 && out.get(i, 1) == 0));
        assert_eq!(out.get(2, 4), 14);
        assert_eq!(out.void_count(), 0);
    }

    #[test]
    fn rejects_mismatch_and_unregistered() {
        let l = LabelMap::filled(4, 4, 14);
        let d = DepthMap::new_invalid(4, 3);
        assert!(fuse_labels(&l, &d, &[], Horizon::Row(0), 0, &reg()).is_err());
        let d = DepthMap::new_invalid(4, 4);
        assert!(matches!(
            fuse_labels(&l, &d, &[(Mask::new(4, 4), 200)], Horizon::Row(0), 0, &reg()),
            Err(Error::UnregisteredClass(200))
        ));
    }

    #[test]
    fn inpaint_trivial_cases() {
        let v = LabelMap::new_void(7, 3);
        assert_eq!(inpaint_holes(&v), v);
        let f = LabelMap::filled(7, 3, 4);
        assert_eq!(inpaint_holes(&f), f);
    }

    #[test]
    fn inpaint_matches_nearest_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let (w, h) = (rng.gen_range(1..40), rng.gen_range(1..40));
            let data: Vec<u8> = (0..w * h)
                .map(|_| if rng.gen_bool(0.05) { rng.gen_range(0..5) } else { VOID })
                .collect();
            let l = LabelMap::from_raw(w, h, data).unwrap();
            let out = inpaint_holes(&l);
            let sources: Vec<(usize, usize, u8)> = (0..h)
                .flat_map(|j| (0..w).map(move |i| (i, j)))
                .filter(|&(i, j)| l.get(i, j) != VOID)
                .map(|(i, j)| (i, j, l.get(i, j)))
                .collect();
            for j in 0..h {
                for i in 0..w {
                    if l.get(i, j) != VOID {
                        assert_eq!(out.get(i, j), l.get(i, j));
                        continue;
                    }
                    if sources.is_empty() {
                        assert_eq!(out.get(i, j), VOID);
                        continue;
                    }
                    let best = sources.iter().map(|s| s.0.abs_diff(i) + s.1.abs_diff(j)).min().unwrap();
                    let ok = sources
                        .iter()
                        .any(|s| s.0.abs_diff(i) + s.1.abs_diff(j) == best && s.2 == out.get(i, j));
                    assert!(ok, "pixel ({i},{j})");
                }
            }
        }
    }
}
