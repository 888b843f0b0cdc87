use std::fmt;

use rayon::prelude::*;

use super::kalman::{kalman_smooth, KalmanConfig};
use super::loss::{LossPointSet, DEFAULT_MAX_SUPPORT};
use super::refine::{label_agreement, refine_pose_geometric, Objective, RefineOutcome, RefineStatus, Refiner};
use crate::error::{Error, Result};
use crate::geometry::{angular_distance, CameraIntrinsics, Pose};
use crate::render::LabelMap;
use crate::road::{rectify_translation, RoadOffsetField};

/// One input frame: the observed label map and its noisy pose prior.
#[derive(Clone, Debug)]
pub struct TrackFrame {
    pub observed: LabelMap,
    pub noisy: Pose,
}

/// Per-frame output of [`track_sequence`].
#[derive(Clone, Debug)]
pub struct FrameResult {
    pub raw: Pose,
    pub rectified: Pose,
    pub refined: Pose,
    pub smoothed: Pose,
    pub refine: RefineOutcome,
    /// Agreement of the final rendering with the observation.
    pub agreement: f64,
    pub labels: LabelMap,
}

impl FrameResult {
    pub fn failed(&self) -> bool {
        self.refine.failed()
    }
}

/// Runs rectification, refinement, smoothing and the final rendering.
///
/// Frames whose refinement fails keep their rectified pose and are flagged.
/// `truth` is only needed by the geometric-loss objective.
pub fn track_sequence(
    frames: &[TrackFrame],
    refiner: &Refiner,
    field: &RoadOffsetField,
    k: &CameraIntrinsics,
    kalman: &KalmanConfig,
    truth: Option<&[Pose]>,
) -> Result<Vec<FrameResult>> {
    if frames.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(t) = truth {
        if t.len() != frames.len() {
            return Err(Error::LengthMismatch(frames.len(), t.len()));
        }
    }
    let objective = refiner.config().objective;
    if objective == Objective::GeometricLoss && truth.is_none() {
        return Err(Error::invalid("the geometric-loss objective needs reference poses"));
    }

    let staged: Vec<(Pose, Pose, RefineOutcome)> = frames
        .par_iter()
        .enumerate()
        .map(|(n, fr)| -> Result<_> {
            let rectified = fr
                .noisy
                .with_translation(rectify_translation(fr.noisy.translation(), field));
            let outcome = match objective {
                Objective::LabelAgreement => refiner.refine(&fr.observed, &rectified, k)?,
                Objective::GeometricLoss => {
                    let gt = &truth.expect("checked above")[n];
                    let pts = LossPointSet::from_render(
                        refiner.full_index(),
                        gt,
                        &CameraIntrinsics::default_loss(),
                        refiner.loss_weights(),
                        DEFAULT_MAX_SUPPORT,
                    )?;
                    refine_pose_geometric(&rectified, gt, &pts, k, refiner.config())?
                }
            };
            Ok((fr.noisy, rectified, outcome))
        })
        .collect::<Result<_>>()?;

    let refined: Vec<Pose> = staged
        .iter()
        .map(|(_, rect, out)| {
            if out.status == RefineStatus::Converged {
                out.pose
            } else {
                *rect
            }
        })
        .collect();
    let smoothed = kalman_smooth(&refined, kalman)?;

    frames
        .par_iter()
        .zip(staged.into_par_iter())
        .zip(refined.par_iter().zip(smoothed.par_iter()))
        .map(|((fr, (raw, rectified, refine)), (refined, smoothed))| {
            let labels = refiner.full_index().render_labels(smoothed, k);
            let agreement = label_agreement(&labels, &fr.observed)?;
            Ok(FrameResult {
                raw,
                rectified,
                refined: *refined,
                smoothed: *smoothed,
                refine,
                agreement,
                labels,
            })
        })
        .collect()
}

/// One line of per-frame, per-stage diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct StageRecord {
    pub frame: usize,
    pub stage: &'static str,
    pub pose: Pose,
    pub trans_err: Option<f64>,
    pub rot_err: Option<f64>,
    pub agreement: Option<f64>,
    pub failed: bool,
}

impl fmt::Display for StageRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [qw, qx, qy, qz] = self.pose.wxyz();
        let t = self.pose.translation();
        write!(
            f,
            "frame={} stage={} qw={qw:.9} qx={qx:.9} qy={qy:.9} qz={qz:.9} tx={:.6} ty={:.6} tz={:.6}",
            self.frame, self.stage, t.x, t.y, t.z
        )?;
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6}"));
        write!(
            f,
            " trans_err={} rot_err={} agreement={}",
            opt(self.trans_err),
            opt(self.rot_err),
            opt(self.agreement)
        )?;
        if self.failed {
            write!(f, " failed=1")?;
        }
        Ok(())
    }
}

/// Expands tracking results into stage records, with errors against
/// `truth` when given.
pub fn stage_records(results: &[FrameResult], truth: Option<&[Pose]>) -> Vec<StageRecord> {
    let mut out = Vec::with_capacity(results.len() * 4);
    for (n, r) in results.iter().enumerate() {
        let gt = truth.and_then(|t| t.get(n));
        let stages = [
            ("raw", r.raw, None),
            ("rectified", r.rectified, Some(r.refine.coarse_score)),
            ("refined", r.refined, Some(r.refine.score)),
            ("smoothed", r.smoothed, Some(r.agreement)),
        ];
        for (stage, pose, agreement) in stages {
            out.push(StageRecord {
                frame: n,
                stage,
                pose,
                trans_err: gt.map(|g| (pose.translation() - g.translation()).norm()),
                rot_err: gt.map(|g| angular_distance(pose.rotation(), g.rotation())),
                agreement,
                failed: stage == "refined" && r.failed(),
            });
        }
    }
    out
}
