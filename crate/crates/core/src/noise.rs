//! Simulated GPS/IMU pose noise and the repeated-trial harness.

use nalgebra::Vector3;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_correction, axis_angle, Pose, PoseDelta};

pub const DEFAULT_TRANS_NOISE: f64 = 7.5;
pub const DEFAULT_ROT_NOISE_DEG: f64 = 15.0;
pub const DEFAULT_TRIALS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseScheme {
    /// Magnitude uniform in `[0, bound]`, direction or axis uniform on the sphere.
    Magnitude,
    /// Each translation axis uniform in `[-bound, bound]`; likewise each of
    /// three rotation angles about the world axes.
    PerAxis,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Translation bound in meters.
    pub eps_t: f64,
    /// Rotation bound in degrees.
    pub eps_r_deg: f64,
    pub scheme: NoiseScheme,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            eps_t: DEFAULT_TRANS_NOISE,
            eps_r_deg: DEFAULT_ROT_NOISE_DEG,
            scheme: NoiseScheme::Magnitude,
            seed: 0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_t.is_finite() && self.eps_t >= 0.0) {
            return Err(Error::invalid(format!(
                "translation noise bound must be >= 0, got {}",
                self.eps_t
            )));
        }
        if !(self.eps_r_deg.is_finite() && self.eps_r_deg >= 0.0) {
            return Err(Error::invalid(format!(
                "rotation noise bound must be >= 0, got {}",
                self.eps_r_deg
            )));
        }
        Ok(())
    }

    /// Samples one world-frame perturbation.
    pub fn sample_delta<R: Rng + ?Sized>(&self, rng: &mut R) -> PoseDelta {
        match self.scheme {
            NoiseScheme::Magnitude => {
                let dir = Vector3::from(UnitSphere.sample(rng));
                let axis = Vector3::from(UnitSphere.sample(rng));
                let mag = rng.gen::<f64>() * self.eps_t;
                let ang = rng.gen::<f64>() * self.eps_r_deg;
                PoseDelta::new(axis_angle(axis, ang), dir * mag)
            }
            NoiseScheme::PerAxis => {
                let mut sym = |b: f64| (2.0 * rng.gen::<f64>() - 1.0) * b;
                let dt = Vector3::new(sym(self.eps_t), sym(self.eps_t), sym(self.eps_t));
                let (rx, ry, rz) = (sym(self.eps_r_deg), sym(self.eps_r_deg), sym(self.eps_r_deg));
                let dq = axis_angle(Vector3::z(), rz) * axis_angle(Vector3::y(), ry) * axis_angle(Vector3::x(), rx);
                PoseDelta::new(dq, dt)
            }
        }
    }
}

/// Left-composes a random perturbation onto `truth`.
pub fn perturb_pose<R: Rng + ?Sized>(truth: &Pose, nm: &NoiseModel, rng: &mut R) -> Pose {
    if nm.eps_t == 0.0 && nm.eps_r_deg == 0.0 {
        return *truth;
    }
    apply_correction(truth, &nm.sample_delta(rng))
}

/// Perturbs a whole trajectory from the model's own seed.
pub fn perturb_sequence(truth: &[Pose], nm: &NoiseModel) -> Vec<Pose> {
    let mut rng = ChaCha8Rng::seed_from_u64(nm.seed);
    truth.iter().map(|p| perturb_pose(p, nm, &mut rng)).collect()
}

/// Independent per-trial seeds derived from a master seed.
pub fn trial_seeds(master: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..n).map(|_| rng.next_u64()).collect()
}

/// Mean and sample standard deviation (n - 1 denominator).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub values: Vec<f64>,
}

/// Runs `experiment` once per trial seed and summarizes every metric it
/// reports. All trials must report the same metric names in the same order.
pub fn simulate_trials<F>(master_seed: u64, n_trials: usize, experiment: F) -> Result<Vec<MetricSummary>>
where
    F: Fn(u64) -> Result<Vec<(String, f64)>> + Sync,
{
    if n_trials < 2 {
        return Err(Error::invalid(format!("need at least 2 trials, got {n_trials}")));
    }
    let runs: Vec<Vec<(String, f64)>> = trial_seeds(master_seed, n_trials)
        .into_par_iter()
        .map(&experiment)
        .collect::<Result<_>>()?;
    let names: Vec<String> = runs[0].iter().map(|(n, _)| n.clone()).collect();
    for run in &runs {
        if run.len() != names.len() || run.iter().zip(&names).any(|((a, _), b)| a != b) {
            return Err(Error::invalid("trials reported different metrics"));
        }
    }
    Ok(names
        .iter()
        .enumerate()
        .map(|(m, name)| {
            let values: Vec<f64> = runs.iter().map(|r| r[m].1).collect();
            let (mean, sd) = mean_sd(&values);
            MetricSummary {
                name: name.clone(),
                mean,
                sd,
                values,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{angular_distance, relative_pose};

    #[test]
    fn zero_bounds_leave_pose_unchanged() {
        let nm = NoiseModel {
            eps_t: 0.0,
            eps_r_deg: 0.0,
            ..Default::default()
        };
        let p = Pose::looking_along(Vector3::new(1.0, 2.0, 3.0), 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(perturb_pose(&p, &nm, &mut rng), p);
    }

    #[test]
    fn bounds_are_hard_and_mean_is_half() {
        let nm = NoiseModel::default();
        let p = Pose::looking_along(Vector3::new(10.0, -3.0, 1.5), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let q = perturb_pose(&p, &nm, &mut rng);
            let d = relative_pose(&p, &q);
            let m = d.dt.norm();
            assert!(m <= 7.5 + 1e-9);
            assert!(angular_distance(p.rotation(), q.rotation()) <= 15.0 + 1e-9);
            sum += m;
        }
        let mean = sum / n as f64;
        assert!((mean - 3.75).abs() < 0.02 * 3.75, "{mean}");
    }

    #[test]
    fn per_axis_bounds() {
        let nm = NoiseModel {
            scheme: NoiseScheme::PerAxis,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let d = nm.sample_delta(&mut rng);
            assert!(d.dt.iter().all(|v| v.abs() <= 7.5));
        }
    }

    #[test]
    fn sequence_is_reproducible() {
        let traj: Vec<Pose> = (0..20)
            .map(|i| Pose::looking_along(Vector3::new(i as f64, 0.0, 1.5), 0.0))
            .collect();
        let nm = NoiseModel {
            seed: 77,
            ..Default::default()
        };
        assert_eq!(perturb_sequence(&traj, &nm), perturb_sequence(&traj, &nm));
    }

    #[test]
    fn sample_sd() {
        assert_eq!(mean_sd(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
        let (m, s) = mean_sd(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn trials_summaries() {
        let out = simulate_trials(5, 10, |_| Ok(vec![("x".into(), 4.0)])).unwrap();
        assert_eq!(out[0].mean, 4.0);
        assert_eq!(out[0].sd, 0.0);
        let a = simulate_trials(5, 4, |s| Ok(vec![("s".into(), (s % 1000) as f64)])).unwrap();
        let b = simulate_trials(5, 4, |s| Ok(vec![("s".into(), (s % 1000) as f64)])).unwrap();
        assert_eq!(a, b);
        assert!(simulate_trials(5, 1, |_| Ok(vec![])).is_err());
    }
}
