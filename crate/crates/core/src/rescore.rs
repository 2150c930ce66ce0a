//! Temporal-consistency rescoring.
//!
//! Every tracklet carries the best-scoring track hypothesis that ends in it.
//! A hypothesis scores the sum of its tracklet scores plus `w_bnd` times the
//! boundary scores between successive tracklets. When a tracklet is born its
//! predecessor is fixed to the best closed tracklet (or none). Later
//! extensions add the same amount to every hypothesis ending in the tracklet,
//! so the choice never needs revisiting. Closed tracklets are frozen, which
//! lets the predecessor search walk them in order of an upper bound and stop
//! early without changing the result.
//!
//! Ties are broken by comparing hypotheses from their last tracklet
//! backwards: lower tracklet id first, and "no predecessor" before any
//! predecessor.

use std::cmp::Reverse;
use std::collections::BTreeSet;

use ordered_float::OrderedFloat;

use crate::error::{Error, Result};
use crate::geometry::{center_distance, ff_score, iou, BoundingBox};
use crate::model::{
    Detection, FrameDetections, Hyperparams, Sequence, TrackEntry, TrackHypothesis, TrackResult,
    Tracklet, TrackletId,
};
use crate::tracklets::{StepOutcome, TrackletStore};

/// Per-frame term of the tracklet score: detection score plus weighted
/// aspect-ratio similarity to the first-frame box.
pub fn detection_contribution(d: &Detection, first_box: &BoundingBox, params: &Hyperparams) -> f64 {
    d.score + params.w_ff * ff_score(first_box, &d.bbox, params.alpha_ff)
}

/// Sum of per-frame contributions, accumulated in frame order.
pub fn tracklet_score(t: &Tracklet, first_box: &BoundingBox, params: &Hyperparams) -> f64 {
    t.detections
        .iter()
        .fold(0.0, |acc, d| acc + detection_contribution(d, first_box, params))
}

fn boundary_multiplier(prev_len: usize, params: &Hyperparams) -> f64 {
    if params.boundary_length_weighting {
        prev_len as f64
    } else {
        1.0
    }
}

fn boundary_term(prev_last: &BoundingBox, prev_len: usize, next_first: &BoundingBox, params: &Hyperparams) -> f64 {
    let per_frame = params.w_iou * iou(prev_last, next_first)
        - params.w_loc * center_distance(prev_last, next_first)
        - params.alpha_bnd;
    boundary_multiplier(prev_len, params) * per_frame
}

/// Link score between `prev` and a later `next`, compared across any gap.
///
/// With `boundary_length_weighting` the per-frame term is counted once for
/// every frame of `prev`; otherwise once.
pub fn boundary_score(prev: &Tracklet, next: &Tracklet, params: &Hyperparams) -> Result<f64> {
    if prev.end() >= next.start() {
        return Err(Error::structural(format!(
            "boundary needs {} (ends {}) to end before {} (starts {})",
            prev.id,
            prev.end(),
            next.id,
            next.start()
        )));
    }
    Ok(boundary_term(&prev.last().bbox, prev.len(), &next.first().bbox, params))
}

/// Full hypothesis score recomputed from scratch over ordered tracklets.
pub fn hypothesis_score(chain: &[&Tracklet], first_box: &BoundingBox, params: &Hyperparams) -> Result<f64> {
    let mut total = 0.0;
    for t in chain {
        total += tracklet_score(t, first_box, params);
    }
    let mut bnd = 0.0;
    for pair in chain.windows(2) {
        bnd += boundary_score(pair[0], pair[1], params)?;
    }
    Ok(total + params.w_bnd * bnd)
}

/// Orders two equal-scored hypotheses, read from their last tracklet
/// backwards. `Less` means `a` wins.
pub fn tie_break(a: &[TrackletId], b: &[TrackletId]) -> std::cmp::Ordering {
    a.iter().rev().cmp(b.iter().rev())
}

#[derive(Debug, Clone, Copy)]
struct Node {
    pred: Option<TrackletId>,
    /// Predecessor hypothesis score plus weighted boundary term; 0 without one.
    carried: f64,
    /// Tracklet score so far.
    own: f64,
}

impl Node {
    fn score(&self) -> f64 {
        self.carried + self.own
    }
}

fn better(a: (f64, TrackletId), b: (f64, TrackletId)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Single-object online rescoring engine.
#[derive(Debug, Clone)]
pub struct Engine {
    params: Hyperparams,
    first_box: BoundingBox,
    store: TrackletStore,
    nodes: Vec<Node>,
    /// Closed tracklets keyed by an upper bound on what they can offer a
    /// successor.
    closed: BTreeSet<(Reverse<OrderedFloat<f64>>, TrackletId)>,
    best_closed: Option<(f64, TrackletId)>,
    global_best: Option<TrackletId>,
}

impl Engine {
    pub fn new(first_box: BoundingBox, params: Hyperparams) -> Result<Self> {
        params.validate()?;
        Ok(Engine {
            params,
            first_box,
            store: TrackletStore::new(),
            nodes: Vec::new(),
            closed: BTreeSet::new(),
            best_closed: None,
            global_best: None,
        })
    }

    pub fn params(&self) -> &Hyperparams {
        &self.params
    }

    pub fn store(&self) -> &TrackletStore {
        &self.store
    }

    /// Processes one frame and returns the output entry for it.
    pub fn push(&mut self, frame: &FrameDetections) -> Result<TrackEntry> {
        let outcome = self.store.step(frame, self.params.join_threshold)?;
        self.dp_step(&outcome);
        Ok(self.select_output(frame))
    }

    /// Updates hypothesis scores after the tracklet store processed a frame.
    pub fn dp_step(&mut self, outcome: &StepOutcome) {
        for &id in &outcome.closed {
            let score = self.nodes[id.0].score();
            let t = self.store.get(id);
            let bound = score
                + self.params.w_bnd
                    * (boundary_multiplier(t.len(), &self.params) * (self.params.w_iou - self.params.alpha_bnd));
            self.closed.insert((Reverse(OrderedFloat(bound)), id));
            if self.best_closed.is_none_or(|b| better((score, id), b)) {
                self.best_closed = Some((score, id));
            }
        }

        for &id in &outcome.extended {
            let d = self.store.get(id).last();
            self.nodes[id.0].own += detection_contribution(d, &self.first_box, &self.params);
        }

        for &id in &outcome.created {
            debug_assert_eq!(id.0, self.nodes.len());
            let first = *self.store.get(id).first();
            let (carried, pred) = self.best_predecessor(&first);
            self.nodes.push(Node {
                pred,
                carried,
                own: detection_contribution(&first, &self.first_box, &self.params),
            });
        }

        let mut best = self.best_closed;
        for &id in self.store.live() {
            let cand = (self.nodes[id.0].score(), id);
            if best.is_none_or(|b| better(cand, b)) {
                best = Some(cand);
            }
        }
        self.global_best = best.map(|(_, id)| id);
    }

    fn best_predecessor(&self, first: &Detection) -> (f64, Option<TrackletId>) {
        let mut best_value = 0.0;
        let mut best_pred = None;
        for &(Reverse(OrderedFloat(bound)), pid) in &self.closed {
            if bound < best_value {
                break;
            }
            let p = self.store.get(pid);
            if let Some(h) = self.params.predecessor_horizon {
                if first.frame - p.end() > h {
                    continue;
                }
            }
            let value = self.nodes[pid.0].score()
                + self.params.w_bnd * boundary_term(&p.last().bbox, p.len(), &first.bbox, &self.params);
            let wins = match best_pred {
                None => value > best_value,
                Some(bp) => value > best_value || (value == best_value && pid < bp),
            };
            if wins {
                best_value = value;
                best_pred = Some(pid);
            }
        }
        (best_value, best_pred)
    }

    /// Chooses the output for the frame just processed.
    ///
    /// Uses the best hypothesis's detection on this frame when it has one.
    /// Otherwise picks the detection that best combines score with
    /// consistency to the hypothesis's last box. Confidence is the raw
    /// detection score.
    pub fn select_output(&self, frame: &FrameDetections) -> TrackEntry {
        let t = frame.frame;
        let Some(best) = self.global_best else {
            return argmax_entry(frame);
        };
        let tracklet = self.store.get(best);
        if let Some(d) = tracklet.at_frame(t) {
            return TrackEntry::present(t, d.bbox, d.score);
        }
        let last = tracklet.last();
        let gap = (t - last.frame) as f64;
        let mut chosen: Option<(f64, &Detection)> = None;
        for d in &frame.detections {
            let value = d.score + self.params.w_iou * iou(&d.bbox, &last.bbox)
                - self.params.w_loc * center_distance(&d.bbox, &last.bbox)
                - self.params.fallback_gap_penalty * gap;
            let wins = match chosen {
                None => true,
                Some((v, c)) => value > v || (value == v && d.id < c.id),
            };
            if wins {
                chosen = Some((value, d));
            }
        }
        match chosen {
            Some((_, d)) => TrackEntry::present(t, d.bbox, d.score),
            None => TrackEntry::absent(t),
        }
    }

    /// Best hypothesis ending in `id`.
    pub fn hypothesis(&self, id: TrackletId) -> TrackHypothesis {
        let mut chain = vec![id];
        let mut cur = self.nodes[id.0].pred;
        while let Some(p) = cur {
            chain.push(p);
            cur = self.nodes[p.0].pred;
        }
        chain.reverse();
        TrackHypothesis {
            tracklets: chain,
            score: self.nodes[id.0].score(),
            last_frame: self.store.get(id).end(),
        }
    }

    pub fn hypothesis_score(&self, id: TrackletId) -> f64 {
        self.nodes[id.0].score()
    }

    pub fn global_best(&self) -> Option<TrackHypothesis> {
        self.global_best.map(|id| self.hypothesis(id))
    }
}

fn argmax_entry(frame: &FrameDetections) -> TrackEntry {
    let mut best: Option<&Detection> = None;
    for d in &frame.detections {
        if best.is_none_or(|b| d.score > b.score || (d.score == b.score && d.id < b.id)) {
            best = Some(d);
        }
    }
    match best {
        Some(d) => TrackEntry::present(frame.frame, d.bbox, d.score),
        None => TrackEntry::absent(frame.frame),
    }
}

/// Runs the engine over a validated sequence, one frame at a time.
pub fn run_sequence(seq: &Sequence, params: &Hyperparams) -> Result<TrackResult> {
    let mut engine = Engine::new(seq.first_box(), params.clone())?;
    let entries = seq
        .frames()
        .iter()
        .map(|f| engine.push(f))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrackResult { entries })
}

/// Baseline without rescoring: highest-scoring detection per frame.
pub fn run_no_rescoring(seq: &Sequence) -> TrackResult {
    TrackResult {
        entries: seq.frames().iter().map(argmax_entry).collect(),
    }
}
