//! Pose correction: geometric matching loss, render-and-compare refinement,
//! constant-velocity smoothing and the per-sequence tracking pipeline.

mod kalman;
mod loss;
mod refine;
mod track;

pub use kalman::{kalman_smooth, mean_speed, KalmanConfig, TranslationFilter};
pub use loss::{geometric_loss, LossPointSet, LossValue, DEFAULT_MAX_SUPPORT};
pub use refine::{
    label_agreement, refine_pose, refine_pose_geometric, step_pose, Objective, RefineOutcome, RefineStatus, Refiner,
    RefinerConfig,
};
pub use track::{stage_records, track_sequence, FrameResult, StageRecord, TrackFrame};
