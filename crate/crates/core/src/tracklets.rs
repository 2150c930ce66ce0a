//! Online tracklet formation.
//!
//! Each frame, detections are matched one-to-one against the tracklets that
//! ended on the previous frame. A match needs IoU with the tracklet's last box
//! of at least `join_threshold`; candidate pairs are taken greedily by
//! descending IoU (ties: higher detection score, lower detection id, lower
//! tracklet id). Unmatched detections start new tracklets and unmatched live
//! tracklets close for good.


use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::model::{Detection, FrameDetections, Tracklet, TrackletId};

/// Matched pair from [`greedy_matching`]: indices into the inputs plus IoU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub live: usize,
    pub detection: usize,
    pub iou: f64,
}

/// Greedy one-to-one matching of live tracklet ends to detections.
///
/// `live_boxes` must be ordered by tracklet id, so that the index doubles as
/// the final tie-break.
pub fn greedy_matching(
    live_boxes: &[BoundingBox],
    detections: &[Detection],
    threshold: f64,
) -> Vec<Match> {
    let mut candidates = Vec::new();
    for (li, lb) in live_boxes.iter().enumerate() {
        for (di, d) in detections.iter().enumerate() {
            let iou = lb.iou(&d.bbox);
            if iou >= threshold {
                candidates.push(Match {
                    live: li,
                    detection: di,
                    iou,
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        let (da, db) = (&detections[a.detection], &detections[b.detection]);
        b.iou
            .total_cmp(&a.iou)
            .then_with(|| db.score.total_cmp(&da.score))
            .then_with(|| da.id.cmp(&db.id))
            .then_with(|| a.live.cmp(&b.live))
    });

    let mut live_used = vec![false; live_boxes.len()];
    let mut det_used = vec![false; detections.len()];
    let mut out = Vec::new();
    for c in candidates {
        if live_used[c.live] || det_used[c.detection] {
            continue;
        }
        live_used[c.live] = true;
        det_used[c.detection] = true;
        out.push(c);
    }
    out
}

/// What one call to [`TrackletStore::step`] changed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutcome {
    pub frame: usize,
    /// `(detection id, tracklet)` for every detection of the frame, in
    /// detection order.
    pub assignments: Vec<(u32, TrackletId)>,
    pub extended: Vec<TrackletId>,
    pub created: Vec<TrackletId>,
    /// Live tracklets that received no detection this frame.
    pub closed: Vec<TrackletId>,
}

/// All tracklets built so far, indexed by id.
#[derive(Debug, Clone, Default)]
pub struct TrackletStore {
    tracklets: Vec<Tracklet>,
    live: Vec<TrackletId>,
    last_frame: Option<usize>,
}

impl TrackletStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: TrackletId) -> &Tracklet {
        &self.tracklets[id.0]
    }

    pub fn tracklets(&self) -> &[Tracklet] {
        &self.tracklets
    }

    pub fn into_tracklets(self) -> Vec<Tracklet> {
        self.tracklets
    }

    /// Tracklets whose last detection is on the most recent frame, by id.
    pub fn live(&self) -> &[TrackletId] {
        &self.live
    }

    pub fn is_live(&self, id: TrackletId) -> bool {
        self.last_frame == Some(self.get(id).end())
    }

    pub fn last_frame(&self) -> Option<usize> {
        self.last_frame
    }

    pub fn step(&mut self, frame: &FrameDetections, join_threshold: f64) -> Result<StepOutcome> {
        let expected = self.last_frame.map_or(0, |f| f + 1);
        if frame.frame != expected {
            return Err(Error::structural(format!(
                "tracklet store expected frame {expected}, got {}",
                frame.frame
            )));
        }

        let live_boxes: Vec<BoundingBox> = self
            .live
            .iter()
            .map(|&id| self.tracklets[id.0].last().bbox)
            .collect();
        let matches = greedy_matching(&live_boxes, &frame.detections, join_threshold);

        let mut owner: Vec<Option<TrackletId>> = vec![None; frame.detections.len()];
        let mut extended_mask = vec![false; self.live.len()];
        for m in &matches {
            owner[m.detection] = Some(self.live[m.live]);
            extended_mask[m.live] = true;
        }

        let mut outcome = StepOutcome {
            frame: frame.frame,
            ..StepOutcome::default()
        };
        let mut next_live = Vec::with_capacity(frame.detections.len());
        for (i, &id) in self.live.iter().enumerate() {
            if extended_mask[i] {
                outcome.extended.push(id);
                next_live.push(id);
            } else {
                outcome.closed.push(id);
            }
        }

        for (det, slot) in frame.detections.iter().zip(owner.iter_mut()) {
            let id = match *slot {
                Some(id) => {
                    self.tracklets[id.0].detections.push(*det);
                    id
                }
                None => {
                    let id = TrackletId(self.tracklets.len());
                    self.tracklets.push(Tracklet::new(id, *det));
                    outcome.created.push(id);
                    next_live.push(id);
                    id
                }
            };
            *slot = Some(id);
            outcome.assignments.push((det.id, id));
        }
        next_live.sort_unstable();
        self.live = next_live;
        self.last_frame = Some(frame.frame);

        #[cfg(debug_assertions)]
        for &id in outcome.extended.iter().chain(&outcome.created) {
            if let Err(e) = self.tracklets[id.0].check_invariants(join_threshold) {
                panic!("tracklet invariant broken: {e}");
            }
        }

        Ok(outcome)
    }
}

/// Total IoU of a matching, summed in a fixed order.
pub fn matching_total(matches: &[Match]) -> f64 {
    let mut v: Vec<f64> = matches.iter().map(|m| m.iou).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v.iter().sum()
}
