//! Value types shared across the pipeline.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// One candidate box at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: usize,
    /// Unique within its frame. Lower ids win score ties.
    pub id: u32,
    pub bbox: BoundingBox,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameDetections {
    pub frame: usize,
    pub detections: Vec<Detection>,
}

impl FrameDetections {
    pub fn empty(frame: usize) -> Self {
        FrameDetections {
            frame,
            detections: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrackletId(pub usize);

impl fmt::Display for TrackletId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// A run of detections, one per consecutive frame, covering `start..=end`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub id: TrackletId,
    pub detections: Vec<Detection>,
}

impl Tracklet {
    pub fn new(id: TrackletId, first: Detection) -> Self {
        Tracklet {
            id,
            detections: vec![first],
        }
    }

    pub fn start(&self) -> usize {
        self.detections[0].frame
    }

    pub fn end(&self) -> usize {
        self.detections[self.detections.len() - 1].frame
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> &Detection {
        &self.detections[0]
    }

    pub fn last(&self) -> &Detection {
        &self.detections[self.detections.len() - 1]
    }

    pub fn at_frame(&self, frame: usize) -> Option<&Detection> {
        frame
            .checked_sub(self.start())
            .and_then(|i| self.detections.get(i))
    }

    /// Checks contiguity and the IoU gate between consecutive detections.
    pub fn check_invariants(&self, join_threshold: f64) -> Result<()> {
        for pair in self.detections.windows(2) {
            if pair[1].frame != pair[0].frame + 1 {
                return Err(Error::structural(format!(
                    "tracklet {} jumps from frame {} to {}",
                    self.id, pair[0].frame, pair[1].frame
                )));
            }
            let overlap = pair[0].bbox.iou(&pair[1].bbox);
            if overlap < join_threshold {
                return Err(Error::structural(format!(
                    "tracklet {} links frames {}->{} with iou {overlap} below gate {join_threshold}",
                    self.id, pair[0].frame, pair[1].frame
                )));
            }
        }
        Ok(())
    }
}

/// Temporally ordered chain of non-overlapping tracklets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackHypothesis {
    pub tracklets: Vec<TrackletId>,
    pub score: f64,
    pub last_frame: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackEntry {
    pub frame: usize,
    pub bbox: Option<BoundingBox>,
    /// 0 whenever `bbox` is absent.
    pub confidence: f64,
}

impl TrackEntry {
    pub fn absent(frame: usize) -> Self {
        TrackEntry {
            frame,
            bbox: None,
            confidence: 0.0,
        }
    }

    pub fn present(frame: usize, bbox: BoundingBox, confidence: f64) -> Self {
        TrackEntry {
            frame,
            bbox: Some(bbox),
            confidence,
        }
    }
}

/// Tracker output: one entry per frame of the sequence.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackResult {
    pub entries: Vec<TrackEntry>,
}

impl TrackResult {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtEntry {
    pub frame: usize,
    /// `None` while the target is out of view.
    pub bbox: Option<BoundingBox>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub entries: Vec<GtEntry>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn first_box(&self) -> Option<BoundingBox> {
        self.entries.first().and_then(|e| e.bbox)
    }

    /// Lengths of the maximal runs of absent frames, in order.
    pub fn absence_runs(&self) -> Vec<usize> {
        let mut runs = Vec::new();
        let mut current = 0;
        for e in &self.entries {
            if e.bbox.is_none() {
                current += 1;
            } else if current > 0 {
                runs.push(current);
                current = 0;
            }
        }
        if current > 0 {
            runs.push(current);
        }
        runs
    }
}

/// Scoring and association knobs. Serialized as flat `key = value` config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    /// Weight of the first-frame aspect-ratio term in the tracklet score.
    pub w_ff: f64,
    pub alpha_ff: f64,
    /// Weight of the boundary term between chained tracklets.
    pub w_bnd: f64,
    pub w_iou: f64,
    /// Per-pixel penalty on the center jump across a boundary.
    pub w_loc: f64,
    pub alpha_bnd: f64,
    /// Minimum IoU for a detection to extend a live tracklet.
    pub join_threshold: f64,
    /// Scale the boundary term by the preceding tracklet's length.
    pub boundary_length_weighting: bool,
    /// Per-frame penalty on the gap in fallback selection.
    pub fallback_gap_penalty: f64,
    /// Score of the injected first-frame anchor; the sequence maximum when unset.
    pub anchor_score: Option<f64>,
    /// Per-frame detection cap; the top-scoring detections are kept.
    pub max_detections: usize,
    /// Ignore predecessors that ended more than this many frames ago.
    pub predecessor_horizon: Option<usize>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            w_ff: 1.0,
            alpha_ff: 0.5,
            w_bnd: 1.0,
            w_iou: 1.0,
            w_loc: 0.002,
            alpha_bnd: 0.1,
            join_threshold: 0.7,
            boundary_length_weighting: true,
            fallback_gap_penalty: 0.05,
            anchor_score: None,
            max_detections: 100,
            predecessor_horizon: None,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("w_ff", self.w_ff),
            ("alpha_ff", self.alpha_ff),
            ("w_bnd", self.w_bnd),
            ("w_iou", self.w_iou),
            ("w_loc", self.w_loc),
            ("alpha_bnd", self.alpha_bnd),
            ("join_threshold", self.join_threshold),
            ("fallback_gap_penalty", self.fallback_gap_penalty),
        ];
        for (name, v) in reals {
            if !v.is_finite() {
                return Err(Error::config(format!("{name} must be finite, got {v}")));
            }
        }
        let non_negative = [
            ("w_ff", self.w_ff),
            ("w_bnd", self.w_bnd),
            ("w_iou", self.w_iou),
            ("w_loc", self.w_loc),
            ("fallback_gap_penalty", self.fallback_gap_penalty),
        ];
        for (name, v) in non_negative {
            if v < 0.0 {
                return Err(Error::config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.join_threshold > 0.0 && self.join_threshold <= 1.0) {
            return Err(Error::config(format!(
                "join_threshold must lie in (0, 1], got {}",
                self.join_threshold
            )));
        }
        if let Some(s) = self.anchor_score {
            if !s.is_finite() {
                return Err(Error::config(format!("anchor_score must be finite, got {s}")));
            }
        }
        if self.max_detections == 0 {
            return Err(Error::config("max_detections must be >= 1"));
        }
        Ok(())
    }
}

/// Detection stream checked for contiguity, capped per frame, and anchored
/// at frame 0 by the first-frame box.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    frames: Vec<FrameDetections>,
    first_box: BoundingBox,
    anchor_score: f64,
}

impl Sequence {
    pub fn frames(&self) -> &[FrameDetections] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn first_box(&self) -> BoundingBox {
        self.first_box
    }

    pub fn anchor_score(&self) -> f64 {
        self.anchor_score
    }

    /// The first `len` frames as a sequence with the same anchor.
    pub fn prefix(&self, len: usize) -> Sequence {
        Sequence {
            frames: self.frames[..len.clamp(1, self.frames.len())].to_vec(),
            first_box: self.first_box,
            anchor_score: self.anchor_score,
        }
    }

    pub fn into_frames(self) -> Vec<FrameDetections> {
        self.frames
    }
}

/// Validates a raw detection stream and injects the first-frame anchor.
///
/// Frame 0 of the result holds exactly one detection: `first_box` with id 0
/// and the anchor score. Frames beyond the cap keep their top-scoring
/// detections (ties to lower id), in original order, renumbered from 0.
pub fn validate_sequence(
    frames: Vec<FrameDetections>,
    first_box: BoundingBox,
    params: &Hyperparams,
) -> Result<Sequence> {
    if frames.is_empty() {
        return Err(Error::structural("sequence has no frames"));
    }
    let mut max_score = f64::NEG_INFINITY;
    for (expected, f) in frames.iter().enumerate() {
        if f.frame != expected {
            return Err(Error::structural(format!(
                "frame indices must be contiguous from 0: expected {expected}, found {}",
                f.frame
            )));
        }
        let mut ids = HashSet::with_capacity(f.detections.len());
        for d in &f.detections {
            if d.frame != f.frame {
                return Err(Error::structural(format!(
                    "detection {} carries frame {} inside frame {}",
                    d.id, d.frame, f.frame
                )));
            }
            if !ids.insert(d.id) {
                return Err(Error::structural(format!(
                    "duplicate detection id {} in frame {}",
                    d.id, f.frame
                )));
            }
            if !d.score.is_finite() {
                return Err(Error::structural(format!(
                    "non-finite score on detection {} in frame {}",
                    d.id, f.frame
                )));
            }
            max_score = max_score.max(d.score);
        }
    }
    let anchor_score = params
        .anchor_score
        .unwrap_or(if max_score.is_finite() { max_score } else { 1.0 });

    let frames = frames
        .into_iter()
        .map(|f| {
            if f.frame == 0 {
                FrameDetections {
                    frame: 0,
                    detections: vec![Detection {
                        frame: 0,
                        id: 0,
                        bbox: first_box,
                        score: anchor_score,
                    }],
                }
            } else {
                cap_frame(f, params.max_detections)
            }
        })
        .collect();

    Ok(Sequence {
        frames,
        first_box,
        anchor_score,
    })
}

fn cap_frame(mut f: FrameDetections, cap: usize) -> FrameDetections {
    if f.detections.len() > cap {
        let mut order: Vec<usize> = (0..f.detections.len()).collect();
        order.sort_by(|&a, &b| {
            let (da, db) = (&f.detections[a], &f.detections[b]);
            db.score.total_cmp(&da.score).then(da.id.cmp(&db.id))
        });
        let mut keep = vec![false; f.detections.len()];
        for &i in &order[..cap] {
            keep[i] = true;
        }
        let mut i = 0;
        f.detections.retain(|_| {
            i += 1;
            keep[i - 1]
        });
    }
    for (i, d) in f.detections.iter_mut().enumerate() {
        d.id = i as u32;
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(frame: usize, id: u32, x: f64, score: f64) -> Detection {
        Detection {
            frame,
            id,
            bbox: BoundingBox::new(x, 0.0, 10.0, 10.0).unwrap(),
            score,
        }
    }

    fn frame(frame: usize, scores: &[f64]) -> FrameDetections {
        FrameDetections {
            frame,
            detections: scores
                .iter()
                .enumerate()
                .map(|(i, &s)| det(frame, i as u32, 20.0 * i as f64, s))
                .collect(),
        }
    }

    fn ff() -> BoundingBox {
        BoundingBox::new(1.0, 1.0, 10.0, 10.0).unwrap()
    }

    #[test]
    fn well_formed_sequence() {
        let seq = validate_sequence(
            vec![frame(0, &[0.5]), frame(1, &[0.3]), frame(2, &[])],
            ff(),
            &Hyperparams::default(),
        )
        .unwrap();
        assert_eq!(seq.len(), 3);
    }

    #[test]
    fn gap_is_structural_error() {
        let err = validate_sequence(
            vec![frame(0, &[0.5]), frame(2, &[0.3])],
            ff(),
            &Hyperparams::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Structural(_)));
        let err = validate_sequence(vec![], ff(), &Hyperparams::default()).unwrap_err();
        assert!(matches!(err, Error::Structural(_)));
    }

    #[test]
    fn frame_zero_holds_only_the_anchor() {
        let seq = validate_sequence(
            vec![frame(0, &[0.1, 0.2, 0.9, 0.4, 0.3]), frame(1, &[1.5])],
            ff(),
            &Hyperparams::default(),
        )
        .unwrap();
        let f0 = &seq.frames()[0];
        assert_eq!(f0.detections.len(), 1);
        assert_eq!(f0.detections[0].bbox, ff());
        assert_eq!(f0.detections[0].score, 1.5);
        assert_eq!(seq.anchor_score(), 1.5);

        let params = Hyperparams {
            anchor_score: Some(3.0),
            ..Hyperparams::default()
        };
        let seq = validate_sequence(vec![frame(0, &[])], ff(), &params).unwrap();
        assert_eq!(seq.frames()[0].detections[0].score, 3.0);
    }

    #[test]
    fn cap_keeps_top_scores_in_order() {
        let params = Hyperparams {
            max_detections: 2,
            ..Hyperparams::default()
        };
        let seq = validate_sequence(
            vec![frame(0, &[]), frame(1, &[0.2, 0.9, 0.5, 0.9])],
            ff(),
            &params,
        )
        .unwrap();
        let kept: Vec<(u32, f64, f64)> = seq.frames()[1]
            .detections
            .iter()
            .map(|d| (d.id, d.score, d.bbox.x()))
            .collect();
        assert_eq!(kept, vec![(0, 0.9, 20.0), (1, 0.9, 60.0)]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut f = frame(1, &[0.1, 0.2]);
        f.detections[1].id = 0;
        assert!(validate_sequence(vec![frame(0, &[]), f], ff(), &Hyperparams::default()).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(Hyperparams::default().validate().is_ok());
        for bad in [
            Hyperparams {
                join_threshold: 1.5,
                ..Default::default()
            },
            Hyperparams {
                join_threshold: 0.0,
                ..Default::default()
            },
            Hyperparams {
                w_loc: -1.0,
                ..Default::default()
            },
            Hyperparams {
                alpha_bnd: f64::INFINITY,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn absence_runs_recount() {
        let b = Some(ff());
        let gt = GroundTruth {
            entries: [b, None, None, b, None, b, None]
                .iter()
                .enumerate()
                .map(|(frame, &bbox)| GtEntry { frame, bbox })
                .collect(),
        };
        assert_eq!(gt.absence_runs(), vec![2, 1, 1]);
    }
}
