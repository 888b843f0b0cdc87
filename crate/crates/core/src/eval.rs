//! Pose-error statistics and segmentation metrics.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{angular_distance, Pose};
use crate::render::LabelMap;
use crate::semantic_map::{ClassRegistry, VOID};

/// Median with the even-count convention of averaging the middle pair.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Per-frame translation (m) and rotation (deg) errors.
pub fn per_frame_errors(estimates: &[Pose], truth: &[Pose]) -> Result<Vec<(f64, f64)>> {
    if estimates.len() != truth.len() {
        return Err(Error::LengthMismatch(estimates.len(), truth.len()));
    }
    Ok(estimates
        .iter()
        .zip(truth)
        .map(|(e, t)| {
            (
                (e.translation() - t.translation()).norm(),
                angular_distance(e.rotation(), t.rotation()),
            )
        })
        .collect())
}

/// Median translation error and median rotation error.
pub fn pose_errors(estimates: &[Pose], truth: &[Pose]) -> Result<(f64, f64)> {
    if estimates.is_empty() {
        return Err(Error::invalid("pose evaluation needs at least one frame"));
    }
    let errs = per_frame_errors(estimates, truth)?;
    let t: Vec<f64> = errs.iter().map(|e| e.0).collect();
    let r: Vec<f64> = errs.iter().map(|e| e.1).collect();
    Ok((median(&t).expect("non-empty"), median(&r).expect("non-empty")))
}

/// 256x256 class confusion counts, `counts[gt][pred]`, plus the number of
/// labelled ground-truth pixels whose prediction is void.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Confusion {
    counts: Vec<u64>,
    pub pred_void: u64,
}

impl Default for Confusion {
    fn default() -> Self {
        Confusion {
            counts: vec![0; 256 * 256],
            pred_void: 0,
        }
    }
}

impl Confusion {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one frame. Ground-truth void pixels are skipped; predicted void
    /// pixels are tallied separately and kept out of the matrix.
    pub fn accumulate(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<()> {
        pred.check_same_dims(gt.width(), gt.height())?;
        for (&p, &g) in pred.as_slice().iter().zip(gt.as_slice()) {
            if g == VOID {
                continue;
            }
            if p == VOID {
                self.pred_void += 1;
            } else {
                self.counts[g as usize * 256 + p as usize] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Confusion) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.pred_void += other.pred_void;
    }

    #[inline]
    pub fn get(&self, gt: u8, pred: u8) -> u64 {
        self.counts[gt as usize * 256 + pred as usize]
    }

    pub fn add(&mut self, gt: u8, pred: u8, n: u64) {
        self.counts[gt as usize * 256 + pred as usize] += n;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn metrics(&self) -> Result<SegMetrics> {
        let total = self.total();
        if total == 0 {
            return Err(Error::NoLabelledPixels);
        }
        let mut gt_sum = [0u64; 256];
        let mut pred_sum = [0u64; 256];
        let mut diag = [0u64; 256];
        for g in 0..256 {
            for (p, ps) in pred_sum.iter_mut().enumerate() {
                let n = self.counts[g * 256 + p];
                gt_sum[g] += n;
                *ps += n;
                if g == p {
                    diag[g] = n;
                }
            }
        }
        let mut per_class = Vec::new();
        for c in 0..256 {
            if gt_sum[c] == 0 {
                continue;
            }
            let union = gt_sum[c] + pred_sum[c] - diag[c];
            per_class.push(ClassScore {
                class_id: c as u8,
                accuracy: diag[c] as f64 / gt_sum[c] as f64,
                iou: diag[c] as f64 / union as f64,
                gt_pixels: gt_sum[c],
            });
        }
        let k = per_class.len() as f64;
        Ok(SegMetrics {
            pixel_accuracy: diag.iter().sum::<u64>() as f64 / total as f64,
            mean_accuracy: per_class.iter().map(|c| c.accuracy).sum::<f64>() / k,
            mean_iou: per_class.iter().map(|c| c.iou).sum::<f64>() / k,
            void_fraction: self.pred_void as f64 / (total + self.pred_void) as f64,
            per_class,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassScore {
    pub class_id: u8,
    pub accuracy: f64,
    pub iou: f64,
    pub gt_pixels: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegMetrics {
    pub pixel_accuracy: f64,
    pub mean_accuracy: f64,
    pub mean_iou: f64,
    /// Share of labelled ground-truth pixels predicted as void.
    pub void_fraction: f64,
    /// Classes present in the ground truth, ascending by id.
    pub per_class: Vec<ClassScore>,
}

/// Metrics for one prediction against its ground truth.
pub fn segmentation_metrics(pred: &LabelMap, gt: &LabelMap) -> Result<SegMetrics> {
    let mut c = Confusion::new();
    c.accumulate(pred, gt)?;
    c.metrics()
}

impl SegMetrics {
    /// Flat `key=value` lines.
    pub fn report(&self) -> String {
        let mut s = String::new();
        writeln!(s, "pixel_accuracy={:.6}", self.pixel_accuracy).unwrap();
        writeln!(s, "mean_accuracy={:.6}", self.mean_accuracy).unwrap();
        writeln!(s, "mean_iou={:.6}", self.mean_iou).unwrap();
        writeln!(s, "void_fraction={:.6}", self.void_fraction).unwrap();
        s
    }

    /// Per-class IoU as CSV, with names from `registry` where known.
    pub fn per_class_csv(&self, registry: &ClassRegistry) -> String {
        let mut s = String::from("class_id,name,iou,accuracy,gt_pixels\n");
        for c in &self.per_class {
            let name = registry.get(c.class_id).map_or("unknown", |i| i.name.as_str());
            writeln!(
                s,
                "{},{},{:.6},{:.6},{}",
                c.class_id, name, c.iou, c.accuracy, c.gt_pixels
            )
            .unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn medians() {
        assert_eq!(median(&[9.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn identical_poses_have_zero_error() {
        let p: Vec<Pose> = (0..4)
            .map(|i| Pose::looking_along(Vector3::new(i as f64, 0.0, 1.0), 0.1))
            .collect();
        assert_eq!(pose_errors(&p, &p).unwrap(), (0.0, 0.0));
        assert!(pose_errors(&p, &p[..2]).is_err());
    }

    #[test]
    fn median_translation_error() {
        let truth = vec![Pose::identity(); 3];
        let est: Vec<Pose> = [1.0, 2.0, 9.0]
            .iter()
            .map(|&d| Pose::identity().with_translation(Vector3::new(d, 0.0, 0.0)))
            .collect();
        assert_eq!(pose_errors(&est, &truth).unwrap().0, 2.0);
    }

    #[test]
    fn perfect_prediction() {
        let l = LabelMap::from_raw(3, 2, vec![1, 1, 2, 2, 3, 3]).unwrap();
        let m = segmentation_metrics(&l, &l).unwrap();
        assert_eq!((m.pixel_accuracy, m.mean_accuracy, m.mean_iou), (1.0, 1.0, 1.0));
    }

    #[test]
    fn two_class_hand_case() {
        // gt A A A B, pred A A B B
        let gt = LabelMap::from_raw(4, 1, vec![1, 1, 1, 2]).unwrap();
        let pred = LabelMap::from_raw(4, 1, vec![1, 1, 2, 2]).unwrap();
        let m = segmentation_metrics(&pred, &gt).unwrap();
        assert_eq!(m.pixel_accuracy, 0.75);
        assert_eq!(m.per_class[0].iou, 2.0 / 3.0);
        assert_eq!(m.per_class[1].iou, 0.5);
        assert!((m.mean_iou - 0.583_333_333_333).abs() < 1e-9);
        assert!((m.mean_accuracy - (2.0 / 3.0 + 1.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn void_handling() {
        let gt = LabelMap::new_void(2, 2);
        assert!(matches!(segmentation_metrics(&gt, &gt), Err(Error::NoLabelledPixels)));
        let gt = LabelMap::from_raw(4, 1, vec![1, 1, VOID, 2]).unwrap();
        let pred = LabelMap::from_raw(4, 1, vec![1, VOID, 5, 2]).unwrap();
        let m = segmentation_metrics(&pred, &gt).unwrap();
        assert_eq!(m.pixel_accuracy, 1.0);
        assert!((m.void_fraction - 1.0 / 3.0).abs() < 1e-12);
        // Class 5 appears only in a GT-void pixel, so it is not scored.
        assert!(m.per_class.iter().all(|c| c.class_id != 5));
    }

    fn random_pair(rng: &mut ChaCha8Rng, w: usize, h: usize) -> (LabelMap, LabelMap) {
        let mut gen = || {
            (0..w * h)
                .map(|_| if rng.gen_bool(0.1) { VOID } else { rng.gen_range(0..6) })
                .collect()
        };
        (
            LabelMap::from_raw(w, h, gen()).unwrap(),
            LabelMap::from_raw(w, h, gen()).unwrap(),
        )
    }

    #[test]
    fn accumulation_equals_concatenation() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (p1, g1) = random_pair(&mut rng, 10, 6);
        let (p2, g2) = random_pair(&mut rng, 10, 6);
        let mut acc = Confusion::new();
        acc.accumulate(&p1, &g1).unwrap();
        acc.accumulate(&p2, &g2).unwrap();
        let cat = |a: &LabelMap, b: &LabelMap| {
            let mut d = a.as_slice().to_vec();
            d.extend_from_slice(b.as_slice());
            LabelMap::from_raw(10, 12, d).unwrap()
        };
        assert_eq!(
            acc.metrics().unwrap(),
            segmentation_metrics(&cat(&p1, &p2), &cat(&g1, &g2)).unwrap()
        );
    }

    #[test]
    fn iou_bounded_by_recall_and_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let (p, g) = random_pair(&mut rng, 16, 16);
            let mut c = Confusion::new();
            c.accumulate(&p, &g).unwrap();
            let m = c.metrics().unwrap();
            for s in &m.per_class {
                let pred_total: u64 = (0..=255u8).map(|x| c.get(x, s.class_id)).sum();
                let tp = c.get(s.class_id, s.class_id);
                assert!(s.iou <= s.accuracy + 1e-12);
                if pred_total > 0 {
                    assert!(s.iou <= tp as f64 / pred_total as f64 + 1e-12);
                }
            }
            for v in [m.pixel_accuracy, m.mean_accuracy, m.mean_iou, m.void_fraction] {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn relabeling_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let (p, g) = random_pair(&mut rng, 20, 20);
        let perm = [4u8, 0, 5, 1, 3, 2];
        let relabel = |l: &LabelMap| {
            let d = l
                .as_slice()
                .iter()
                .map(|&c| if c == VOID { VOID } else { perm[c as usize] + 40 })
                .collect();
            LabelMap::from_raw(20, 20, d).unwrap()
        };
        let a = segmentation_metrics(&p, &g).unwrap();
        let b = segmentation_metrics(&relabel(&p), &relabel(&g)).unwrap();
        assert_eq!(a.pixel_accuracy, b.pixel_accuracy);
        assert!((a.mean_iou - b.mean_iou).abs() < 1e-12);
        assert!((a.mean_accuracy - b.mean_accuracy).abs() < 1e-12);
    }
}
