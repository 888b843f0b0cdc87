//! Semantic point-cloud maps for camera relocalization and label transfer.
//!
//! A street scene is scanned over several rounds; points that are not
//! consistently observed are filtered out and the rest form a labelled map.
//! Rendering that map from a camera pose yields dense semantic label and
//! depth maps. Given a noisy pose, [`localization::track_sequence`] recovers
//! an accurate one by snapping to the road, refining against a reference
//! rendering and smoothing over time.

pub mod error;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod localization;
pub mod noise;
pub mod render;
pub mod road;
pub mod semantic_map;
pub mod synth;

pub use error::{Error, Result};
