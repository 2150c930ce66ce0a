//! Online box-level track rescoring with temporal consistency.
//!
//! Detections arrive frame by frame. They are grouped into IoU-consistent
//! tracklets, tracklets are chained into track hypotheses by dynamic
//! programming, and each frame emits the box of the best hypothesis (or a
//! consistency-ranked fallback). Box-level metrics and a synthetic scenario
//! generator with exhaustive oracles round out the crate.

pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod model;
pub mod par;
pub mod rescore;
pub mod synth;
pub mod tracklets;

pub use error::{Error, GeometryError, Result};
pub use geometry::BoundingBox;
pub use metrics::EvalReport;
pub use model::{
    validate_sequence, Detection, FrameDetections, GroundTruth, GtEntry, Hyperparams, Sequence, TrackEntry,
    TrackHypothesis, TrackResult, Tracklet, TrackletId,
};
pub use rescore::{run_no_rescoring, run_sequence, Engine};
