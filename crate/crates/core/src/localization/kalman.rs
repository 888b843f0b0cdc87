use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanConfig {
    /// Assumed speed in meters per frame.
    pub speed: f64,
    /// Process noise: standard deviation of the per-frame velocity change.
    pub sigma_p: f64,
    /// Measurement noise standard deviation in meters.
    pub sigma_m: f64,
}

/// Defaults suit refined poses (errors of a decimeter or two) on a drive
/// with tight curves: at 7.5 m per frame around a 20 m radius the heading
/// turns enough to change the velocity by about 3 m per frame.
impl Default for KalmanConfig {
    fn default() -> Self {
        KalmanConfig {
            speed: 7.5,
            sigma_p: 3.0,
            sigma_m: 0.15,
        }
    }
}

impl KalmanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_p.is_finite() && self.sigma_p > 0.0) {
            return Err(Error::invalid(format!(
                "kalman sigma_p must be positive, got {}",
                self.sigma_p
            )));
        }
        if !(self.sigma_m.is_finite() && self.sigma_m > 0.0) {
            return Err(Error::invalid(format!(
                "kalman sigma_m must be positive, got {}",
                self.sigma_m
            )));
        }
        if !(self.speed.is_finite() && self.speed >= 0.0) {
            return Err(Error::invalid(format!("kalman speed must be >= 0, got {}", self.speed)));
        }
        Ok(())
    }
}

/// Mean distance between consecutive camera centers over some training
/// trajectories.
pub fn mean_speed(trajectories: &[&[Pose]]) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for traj in trajectories {
        for w in traj.windows(2) {
            sum += (w[1].translation() - w[0].translation()).norm();
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Causal constant-velocity Kalman filter over the translations.
///
/// Each axis runs an independent `[position, velocity]` filter with unit
/// time step. The state starts at the first measurement moving at
/// `cfg.speed` along the direction of the first measured motion. Rotations
/// are passed through unchanged.
pub struct TranslationFilter {
    cfg: KalmanConfig,
    state: Option<[(Vector2<f64>, Matrix2<f64>); 3]>,
    first: Option<Vector3<f64>>,
}

impl TranslationFilter {
    pub fn new(cfg: KalmanConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(TranslationFilter {
            cfg,
            state: None,
            first: None,
        })
    }

    fn q(&self) -> Matrix2<f64> {
        let s2 = self.cfg.sigma_p * self.cfg.sigma_p;
        Matrix2::new(0.25, 0.5, 0.5, 1.0) * s2
    }

    /// Feeds one measurement and returns the filtered position.
    pub fn update(&mut self, z: &Vector3<f64>) -> Vector3<f64> {
        let r = self.cfg.sigma_m * self.cfg.sigma_m;
        let Some(first) = self.first else {
            self.first = Some(*z);
            return *z;
        };
        if self.state.is_none() {
            // Second frame: the first motion direction is now known.
            let dir = z - first;
            let v = if dir.norm() > 0.0 {
                dir.normalize() * self.cfg.speed
            } else {
                Vector3::zeros()
            };
            let p0 = Matrix2::new(r, 0.0, 0.0, 2.0 * r + self.cfg.sigma_p.powi(2));
            self.state = Some([0, 1, 2].map(|a| (Vector2::new(first[a], v[a]), p0)));
        }
        let f = Matrix2::new(1.0, 1.0, 0.0, 1.0);
        let q = self.q();
        let state = self.state.as_mut().expect("initialized above");
        let mut out = Vector3::zeros();
        for (a, (x, p)) in state.iter_mut().enumerate() {
            let xp = f * *x;
            let pp = f * *p * f.transpose() + q;
            let s = pp[(0, 0)] + r;
            let gain = Vector2::new(pp[(0, 0)], pp[(1, 0)]) / s;
            let innov = z[a] - xp[0];
            *x = xp + gain * innov;
            let i_kh = Matrix2::new(1.0 - gain[0], 0.0, -gain[1], 1.0);
            *p = i_kh * pp;
            // Keep the covariance symmetric against rounding drift.
            let off = 0.5 * (p[(0, 1)] + p[(1, 0)]);
            p[(0, 1)] = off;
            p[(1, 0)] = off;
            out[a] = x[0];
        }
        out
    }
}

/// Filters a sequence of poses; see [`TranslationFilter`].
pub fn kalman_smooth(measurements: &[Pose], cfg: &KalmanConfig) -> Result<Vec<Pose>> {
    if measurements.is_empty() {
        return Err(Error::invalid("kalman smoothing needs at least one pose"));
    }
    let mut filter = TranslationFilter::new(cfg.clone())?;
    Ok(measurements
        .iter()
        .map(|m| m.with_translation(filter.update(m.translation())))
        .collect())
}
