//! Pose-based virtual-marker multi-object tracking toolkit.
//!
//! The pipeline: anonymous per-frame poses are given consistent identities
//! and rendered as colored virtual markers (`vm`), identity-labeled poses are
//! converted to bounding boxes (`convert`), tracks are scored with HOTA
//! (`metrics`), a SORT-style baseline (`tracker`) provides the
//! tracking-by-detection comparison point, and a deterministic court
//! simulator (`sim`) generates ground truth for all of it. File formats live
//! in `io`/`config`; `pipeline` wires the stages together for the CLI.

pub mod assign;
pub mod config;
pub mod convert;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod select;
pub mod sim;
pub mod tracker;
pub mod types;
pub mod vm;

pub use types::{
    iou, keypoint_distance, BBox, Detection, Keypoint, KeypointName, PlayerId, Pose, PoseFrame,
    TrackSet,
};
