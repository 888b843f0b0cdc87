use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, Z_NEAR};
use crate::render::{backproject_depth, RenderIndex};

/// Default cap on the number of support points.
pub const DEFAULT_MAX_SUPPORT: usize = 20_000;

/// Labelled 3-d support points with per-point loss weights.
#[derive(Clone, Debug, PartialEq)]
pub struct LossPointSet {
    points: Vec<Point3<f64>>,
    classes: Vec<u8>,
    weights: Vec<f64>,
}

impl LossPointSet {
    /// Builds a support set; each point's weight is `class_weights[class]`.
    pub fn new(points: Vec<Point3<f64>>, classes: Vec<u8>, class_weights: &[f64; 256]) -> Result<Self> {
        if points.len() != classes.len() {
            return Err(Error::LengthMismatch(points.len(), classes.len()));
        }
        if points.is_empty() {
            return Err(Error::invalid("loss support set is empty"));
        }
        let weights: Vec<f64> = classes.iter().map(|&c| class_weights[c as usize]).collect();
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::invalid(format!("loss weight {w} is not positive")));
        }
        Ok(LossPointSet {
            points,
            classes,
            weights,
        })
    }

    /// Support points from a depth render at `gt` (normally at the loss
    /// resolution), subsampled by uniform stride to at most `max_points`.
    pub fn from_render(
        index: &RenderIndex,
        gt: &Pose,
        k: &CameraIntrinsics,
        class_weights: &[f64; 256],
        max_points: usize,
    ) -> Result<Self> {
        let r = index.render(gt, k);
        let cloud = backproject_depth(&r.depth, &r.labels, gt, k)?;
        let n = cloud.len();
        if n == 0 {
            return Err(Error::NoVisibleSupport { excluded: 0 });
        }
        let stride = n.div_ceil(max_points.max(1));
        let (points, classes) = cloud
            .points
            .iter()
            .step_by(stride)
            .map(|p| (p.position.cast::<f64>(), p.class_id))
            .unzip();
        Self::new(points, classes, class_weights)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn classes(&self) -> &[u8] {
        &self.classes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Multiplies every weight by `factor`.
    pub fn scale_weights(&mut self, factor: f64) {
        for w in &mut self.weights {
            *w *= factor;
        }
    }

    /// Multiplies the weights of one class by `factor`.
    pub fn scale_class(&mut self, class_id: u8, factor: f64) {
        for (w, &c) in self.weights.iter_mut().zip(&self.classes) {
            if c == class_id {
                *w *= factor;
            }
        }
    }
}

/// Value of the geometric matching loss plus its support bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValue {
    pub loss: f64,
    pub used: usize,
    /// Points behind either camera, left out of the sum.
    pub excluded: usize,
}

/// Weighted sum of pixel distances between each support point's projections
/// under `p` and `p_star`. Image bounds are not enforced; points at or behind
/// the near plane of either camera are excluded.
pub fn geometric_loss(p: &Pose, p_star: &Pose, pts: &LossPointSet, k: &CameraIntrinsics) -> Result<LossValue> {
    if pts.is_empty() {
        return Err(Error::invalid("loss support set is empty"));
    }
    let mut loss = 0.0;
    let mut excluded = 0;
    for (x, w) in pts.points.iter().zip(&pts.weights) {
        let a = p.world_to_camera(x);
        let b = p_star.world_to_camera(x);
        if a.z <= Z_NEAR || b.z <= Z_NEAR {
            excluded += 1;
            continue;
        }
        let (ua, va) = k.project_camera(&a);
        let (ub, vb) = k.project_camera(&b);
        loss += w * (ua - ub).hypot(va - vb);
    }
    if excluded == pts.len() {
        return Err(Error::NoVisibleSupport { excluded });
    }
    Ok(LossValue {
        loss,
        used: pts.len() - excluded,
        excluded,
    })
}
