//! Synthetic scenarios and exhaustive oracles.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`) seeded with
//! `seed_from_u64(seed)`, one stream per concern selected with `set_stream`:
//! stream 0 lays out absences, stream 1 drives the target path, stream
//! `2 + k` drives distractor `k`'s size, bursts and paths, and stream
//! `1 << 32` produces per-frame detection noise. Within a frame the visible
//! target is sampled before the visible distractors, each as: miss draw, then
//! x, y, w, h jitter, then score noise. Normal draws use `rand_distr::StandardNormal`.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::model::{
    validate_sequence, Detection, FrameDetections, GroundTruth, GtEntry, Hyperparams, Sequence, TrackHypothesis,
    Tracklet, TrackletId,
};
use crate::rescore::{hypothesis_score, tie_break};
use crate::tracklets::{matching_total, Match, TrackletStore};

/// Mean disappearances per long-term video.
pub const LT_DISAPPEARANCES: f64 = 12.4;
/// Mean absence length in frames for long-term videos.
pub const LT_MEAN_ABSENCE: f64 = 40.6;
/// Frames per long-term video.
pub const LT_FRAMES: usize = 4200;

pub const MAX_ORACLE_TRACKLETS: usize = 12;
pub const MAX_ORACLE_MATCHING: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub frames: usize,
    pub image_width: f64,
    pub image_height: f64,
    pub target_width: f64,
    pub target_height: f64,
    /// Upper bound on per-frame displacement along the waypoint path, px.
    pub max_speed: f64,
    pub n_disappearances: usize,
    /// Mean length of an absence run; runs total `round(n * mean)` frames.
    pub mean_absence: f64,
    pub n_distractors: usize,
    /// Added to distractor scores on top of `base_score`.
    pub distractor_score_bias: f64,
    /// Distractor width and height are the target's scaled independently by
    /// a factor drawn from `[1 - spread, 1 + spread]`.
    pub distractor_size_spread: f64,
    /// Mean length of a distractor's visible bursts, frames; 0 keeps
    /// distractors visible throughout.
    pub distractor_mean_visible: f64,
    /// Mean length of the gaps between bursts. Each burst starts at a fresh
    /// random position.
    pub distractor_mean_hidden: f64,
    pub base_score: f64,
    /// Std of the box jitter, px.
    pub detection_noise: f64,
    pub score_noise: f64,
    pub miss_rate: f64,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            frames: 500,
            image_width: 1280.0,
            image_height: 720.0,
            target_width: 60.0,
            target_height: 100.0,
            max_speed: 3.0,
            n_disappearances: 0,
            mean_absence: 0.0,
            n_distractors: 0,
            distractor_score_bias: 0.1,
            distractor_size_spread: 0.5,
            distractor_mean_visible: 0.0,
            distractor_mean_hidden: 0.0,
            base_score: 0.7,
            detection_noise: 0.0,
            score_noise: 0.0,
            miss_rate: 0.0,
            seed: 0,
        }
    }
}

impl ScenarioSpec {
    /// Long-term preset: 4200 frames, 12 or 13 disappearances (13 with
    /// probability 0.4, so 12.4 in expectation) of mean length 40.6.
    pub fn long_term(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        let extra = rng.gen::<f64>() < LT_DISAPPEARANCES.fract();
        ScenarioSpec {
            frames: LT_FRAMES,
            n_disappearances: LT_DISAPPEARANCES.floor() as usize + usize::from(extra),
            mean_absence: LT_MEAN_ABSENCE,
            n_distractors: 2,
            distractor_mean_visible: 25.0,
            distractor_mean_hidden: 25.0,
            detection_noise: 1.0,
            score_noise: 0.05,
            miss_rate: 0.02,
            seed,
            ..ScenarioSpec::default()
        }
    }

    /// Total absent frames the generator lays out.
    pub fn total_absence(&self) -> usize {
        (self.n_disappearances as f64 * self.mean_absence).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::config("scenario needs frames >= 1"));
        }
        let reals = [
            ("image_width", self.image_width),
            ("image_height", self.image_height),
            ("target_width", self.target_width),
            ("target_height", self.target_height),
            ("max_speed", self.max_speed),
            ("mean_absence", self.mean_absence),
            ("distractor_score_bias", self.distractor_score_bias),
            ("distractor_size_spread", self.distractor_size_spread),
            ("distractor_mean_visible", self.distractor_mean_visible),
            ("distractor_mean_hidden", self.distractor_mean_hidden),
            ("base_score", self.base_score),
            ("detection_noise", self.detection_noise),
            ("score_noise", self.score_noise),
            ("miss_rate", self.miss_rate),
        ];
        for (name, v) in reals {
            if !v.is_finite() {
                return Err(Error::config(format!("{name} must be finite")));
            }
        }
        for (name, v) in [
            ("max_speed", self.max_speed),
            ("mean_absence", self.mean_absence),
            ("distractor_mean_visible", self.distractor_mean_visible),
            ("distractor_mean_hidden", self.distractor_mean_hidden),
            ("detection_noise", self.detection_noise),
            ("score_noise", self.score_noise),
        ] {
            if v < 0.0 {
                return Err(Error::config(format!("{name} must be >= 0")));
            }
        }
        if !(0.0..=1.0).contains(&self.miss_rate) {
            return Err(Error::config("miss_rate must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.distractor_size_spread) {
            return Err(Error::config("distractor_size_spread must lie in [0, 1)"));
        }
        let max_w = self.target_width * (1.0 + self.distractor_size_spread);
        let max_h = self.target_height * (1.0 + self.distractor_size_spread);
        if self.target_width <= 0.0 || self.target_height <= 0.0 || max_w >= self.image_width || max_h >= self.image_height {
            return Err(Error::config("object sizes must be positive and fit inside the image"));
        }
        if self.n_disappearances > 0 {
            let total = self.total_absence();
            if total < self.n_disappearances {
                return Err(Error::config(format!(
                    "{} disappearances need at least one absent frame each, mean_absence {} gives {total}",
                    self.n_disappearances, self.mean_absence
                )));
            }
            // frame 0 and at least one frame after every run stay visible
            if total + self.n_disappearances + 1 > self.frames {
                return Err(Error::config(format!(
                    "infeasible scenario: {total} absent frames in {} runs do not fit in {} frames",
                    self.n_disappearances, self.frames
                )));
            }
        }
        Ok(())
    }
}

/// Generated detections plus the ground truth they were drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub frames: Vec<FrameDetections>,
    pub ground_truth: GroundTruth,
}

impl Scenario {
    pub fn first_box(&self) -> BoundingBox {
        self.ground_truth.first_box().expect("target visible on frame 0")
    }

    pub fn sequence(&self, params: &Hyperparams) -> Result<Sequence> {
        validate_sequence(self.frames.clone(), self.first_box(), params)
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Splits `total` into `parts` positive integers, uniformly over compositions.
fn composition(rng: &mut ChaCha8Rng, total: usize, parts: usize) -> Vec<usize> {
    debug_assert!(parts >= 1 && total >= parts);
    let mut cuts: Vec<usize> = sample(rng, total - 1, parts - 1).into_iter().map(|c| c + 1).collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(total)) {
        out.push(c - prev);
        prev = c;
    }
    out
}

/// Per-frame visibility with exactly `n` absence runs totaling
/// `spec.total_absence()` frames; frame 0 and the last frame stay visible.
fn visibility(spec: &ScenarioSpec) -> Vec<bool> {
    let n = spec.n_disappearances;
    if n == 0 {
        return vec![true; spec.frames];
    }
    let mut rng = stream(spec.seed, 0);
    let absent = spec.total_absence();
    let runs = composition(&mut rng, absent, n);
    let visible = composition(&mut rng, spec.frames - absent, n + 1);
    let mut out = Vec::with_capacity(spec.frames);
    for i in 0..=n {
        out.extend(std::iter::repeat_n(true, visible[i]));
        if i < n {
            out.extend(std::iter::repeat_n(false, runs[i]));
        }
    }
    out
}

/// Top-left positions along a random waypoint path.
fn path(rng: &mut ChaCha8Rng, frames: usize, w: f64, h: f64, spec: &ScenarioSpec) -> Vec<(f64, f64)> {
    let x_max = spec.image_width - w;
    let y_max = spec.image_height - h;
    let waypoint = |rng: &mut ChaCha8Rng| (rng.gen::<f64>() * x_max, rng.gen::<f64>() * y_max);
    let mut pos = waypoint(rng);
    let mut goal = waypoint(rng);
    let mut speed = spec.max_speed * (0.5 + 0.5 * rng.gen::<f64>());
    let mut out = Vec::with_capacity(frames);
    for _ in 0..frames {
        out.push(pos);
        let (dx, dy) = (goal.0 - pos.0, goal.1 - pos.1);
        let dist = dx.hypot(dy);
        if dist <= speed {
            pos = goal;
            goal = waypoint(rng);
            speed = spec.max_speed * (0.5 + 0.5 * rng.gen::<f64>());
        } else {
            pos = (pos.0 + dx / dist * speed, pos.1 + dy / dist * speed);
        }
    }
    out
}

fn jittered(rng: &mut ChaCha8Rng, x: f64, y: f64, w: f64, h: f64, sigma: f64) -> BoundingBox {
    let mut n = || sigma * rng.sample::<f64, _>(StandardNormal);
    let (jx, jy, jw, jh) = (n(), n(), n(), n());
    BoundingBox::new(x + jx, y + jy, (w + jw).max(1.0), (h + jh).max(1.0)).expect("jittered box is valid")
}

/// Run length with the given mean, at least 1: exponential draw, rounded.
fn run_length(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    let u: f64 = rng.gen();
    ((-mean * (1.0 - u).ln()).round() as usize).max(1)
}

/// Alternating hidden gaps and visible bursts, starting with a gap; each
/// burst follows a fresh path.
fn bursty_path(rng: &mut ChaCha8Rng, w: f64, h: f64, spec: &ScenarioSpec) -> Vec<Option<(f64, f64)>> {
    let mut out = Vec::with_capacity(spec.frames);
    while out.len() < spec.frames {
        let gap = run_length(rng, spec.distractor_mean_hidden);
        out.extend(std::iter::repeat_n(None, gap));
        let burst = run_length(rng, spec.distractor_mean_visible);
        out.extend(path(rng, burst, w, h, spec).into_iter().map(Some));
    }
    out.truncate(spec.frames);
    out
}

/// Draws detections and ground truth for a scenario.
pub fn generate(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let visible = visibility(spec);
    let (tw, th) = (spec.target_width, spec.target_height);
    let target_path = path(&mut stream(spec.seed, 1), spec.frames, tw, th, spec);

    struct Object {
        w: f64,
        h: f64,
        path: Vec<Option<(f64, f64)>>,
    }
    let distractors: Vec<Object> = (0..spec.n_distractors)
        .map(|k| {
            let mut rng = stream(spec.seed, 2 + k as u64);
            let s = spec.distractor_size_spread;
            let w = tw * (1.0 - s + 2.0 * s * rng.gen::<f64>());
            let h = th * (1.0 - s + 2.0 * s * rng.gen::<f64>());
            let path = if spec.distractor_mean_visible > 0.0 {
                bursty_path(&mut rng, w, h, spec)
            } else {
                path(&mut rng, spec.frames, w, h, spec).into_iter().map(Some).collect()
            };
            Object { w, h, path }
        })
        .collect();

    let mut noise = stream(spec.seed, 1 << 32);
    let mut frames = Vec::with_capacity(spec.frames);
    let mut gt = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let (x, y) = target_path[t];
        let truth = BoundingBox::new(x, y, tw, th)?;
        gt.push(GtEntry {
            frame: t,
            bbox: visible[t].then_some(truth),
        });

        let mut dets = Vec::new();
        let mut push = |bbox: BoundingBox, score: f64| {
            let id = dets.len() as u32;
            dets.push(Detection {
                frame: t,
                id,
                bbox,
                score,
            });
        };
        if t == 0 {
            push(truth, spec.base_score);
        } else if visible[t] && noise.gen::<f64>() >= spec.miss_rate {
            let b = jittered(&mut noise, x, y, tw, th, spec.detection_noise);
            let s = spec.base_score + spec.score_noise * noise.sample::<f64, _>(StandardNormal);
            push(b, s);
        }
        for d in &distractors {
            let Some((dx, dy)) = d.path[t] else { continue };
            if noise.gen::<f64>() >= spec.miss_rate {
                let b = jittered(&mut noise, dx, dy, d.w, d.h, spec.detection_noise);
                let s = spec.base_score
                    + spec.distractor_score_bias
                    + spec.score_noise * noise.sample::<f64, _>(StandardNormal);
                push(b, s);
            }
        }
        frames.push(FrameDetections {
            frame: t,
            detections: dets,
        });
    }
    Ok(Scenario {
        frames,
        ground_truth: GroundTruth { entries: gt },
    })
}

/// Specs for the distractor suite: long-term absence statistics with the
/// given sequence length, `n_distractors` biased distractors, and consecutive
/// seeds from `base_seed`.
pub fn distractor_suite(count: usize, base_seed: u64, frames: usize, n_distractors: usize) -> Vec<ScenarioSpec> {
    (0..count as u64)
        .map(|i| ScenarioSpec {
            frames,
            n_distractors,
            ..ScenarioSpec::long_term(base_seed + i)
        })
        .collect()
}

fn check_oracle_size(n: usize) -> Result<()> {
    if n > MAX_ORACLE_TRACKLETS {
        return Err(Error::Guard(format!(
            "exhaustive hypothesis search limited to {MAX_ORACLE_TRACKLETS} tracklets, got {n}"
        )));
    }
    Ok(())
}

/// Best hypothesis ending in each tracklet, by exhaustive enumeration of
/// temporally ordered non-overlapping subsets. Indexed like `tracklets`.
pub fn oracle_best_per_tracklet(
    tracklets: &[Tracklet],
    params: &Hyperparams,
    first_box: &BoundingBox,
) -> Result<Vec<TrackHypothesis>> {
    check_oracle_size(tracklets.len())?;
    let mut order: Vec<usize> = (0..tracklets.len()).collect();
    order.sort_by_key(|&i| (tracklets[i].start(), tracklets[i].id));

    let mut best: Vec<Option<TrackHypothesis>> = vec![None; tracklets.len()];
    'subsets: for mask in 1u32..(1 << tracklets.len()) {
        let chain: Vec<&Tracklet> = order
            .iter()
            .filter(|&&i| mask & (1 << i) != 0)
            .map(|&i| &tracklets[i])
            .collect();
        for pair in chain.windows(2) {
            if pair[0].end() >= pair[1].start() {
                continue 'subsets;
            }
        }
        let score = hypothesis_score(&chain, first_box, params)?;
        let ids: Vec<TrackletId> = chain.iter().map(|t| t.id).collect();
        let last = chain[chain.len() - 1];
        let slot = tracklets.iter().position(|t| t.id == last.id).expect("member");
        let wins = match &best[slot] {
            None => true,
            Some(h) => score > h.score || (score == h.score && tie_break(&ids, &h.tracklets).is_lt()),
        };
        if wins {
            best[slot] = Some(TrackHypothesis {
                tracklets: ids,
                score,
                last_frame: last.end(),
            });
        }
    }
    Ok(best.into_iter().map(|h| h.expect("singleton subset always valid")).collect())
}

/// Highest-scoring hypothesis over all tracklets, same tie-break as the engine.
pub fn oracle_best_hypothesis(
    tracklets: &[Tracklet],
    params: &Hyperparams,
    first_box: &BoundingBox,
) -> Result<Option<TrackHypothesis>> {
    let per = oracle_best_per_tracklet(tracklets, params, first_box)?;
    Ok(per.into_iter().reduce(|a, b| {
        if b.score > a.score || (b.score == a.score && tie_break(&b.tracklets, &a.tracklets).is_lt()) {
            b
        } else {
            a
        }
    }))
}

/// Maximum-total-IoU one-to-one matching over pairs with IoU at or above
/// `threshold`, by exhaustive search.
pub fn oracle_matching(live_boxes: &[BoundingBox], detections: &[Detection], threshold: f64) -> Result<Vec<Match>> {
    if live_boxes.len() > MAX_ORACLE_MATCHING || detections.len() > MAX_ORACLE_MATCHING {
        return Err(Error::Guard(format!(
            "exhaustive matching limited to {MAX_ORACLE_MATCHING}x{MAX_ORACLE_MATCHING}"
        )));
    }
    let ious: Vec<Vec<f64>> = live_boxes
        .iter()
        .map(|l| detections.iter().map(|d| l.iou(&d.bbox)).collect())
        .collect();

    fn search(
        row: usize,
        ious: &[Vec<f64>],
        threshold: f64,
        used: &mut Vec<bool>,
        current: &mut Vec<Match>,
        best: &mut (f64, Vec<Match>),
    ) {
        if row == ious.len() {
            let total = matching_total(current);
            if total > best.0 {
                *best = (total, current.clone());
            }
            return;
        }
        search(row + 1, ious, threshold, used, current, best);
        for col in 0..used.len() {
            if !used[col] && ious[row][col] >= threshold {
                used[col] = true;
                current.push(Match {
                    live: row,
                    detection: col,
                    iou: ious[row][col],
                });
                search(row + 1, ious, threshold, used, current, best);
                current.pop();
                used[col] = false;
            }
        }
    }

    let mut best = (0.0, Vec::new());
    search(0, &ious, threshold, &mut vec![false; detections.len()], &mut Vec::new(), &mut best);
    Ok(best.1)
}

/// Small random instance for oracle checks: at most `max_tracklets`
/// tracklets over at most 30 frames, with random hyperparameters.
pub fn small_instance(seed: u64, max_tracklets: usize) -> (Vec<FrameDetections>, BoundingBox, Hyperparams) {
    let mut rng = stream(seed, 7);
    loop {
        let params = Hyperparams {
            w_ff: rng.gen_range(0.0..2.0),
            alpha_ff: rng.gen_range(0.0..1.0),
            w_bnd: rng.gen_range(0.0..2.0),
            w_iou: rng.gen_range(0.0..2.0),
            w_loc: rng.gen_range(0.0..0.05),
            alpha_bnd: rng.gen_range(-0.5..1.0),
            join_threshold: rng.gen_range(0.3..0.9),
            boundary_length_weighting: rng.gen_bool(0.5),
            fallback_gap_penalty: rng.gen_range(0.0..0.1),
            anchor_score: Some(rng.gen_range(0.0..2.0)),
            ..Hyperparams::default()
        };
        let frames_n = rng.gen_range(2..=30usize);
        let n_objects = rng.gen_range(1..=3usize);
        let rand_box = |rng: &mut ChaCha8Rng| {
            BoundingBox::new(
                rng.gen_range(0.0..160.0),
                rng.gen_range(0.0..160.0),
                rng.gen_range(20.0..60.0),
                rng.gen_range(20.0..60.0),
            )
            .unwrap()
        };
        let first_box = rand_box(&mut rng);
        let mut frames: Vec<FrameDetections> = (0..frames_n).map(FrameDetections::empty).collect();
        for _ in 0..n_objects {
            let a = rng.gen_range(1..frames_n);
            let b = rng.gen_range(a..frames_n);
            let mut cur = rand_box(&mut rng);
            for frame in frames.iter_mut().take(b + 1).skip(a) {
                if rng.gen_bool(0.08) {
                    cur = rand_box(&mut rng);
                } else {
                    cur = BoundingBox::new(
                        cur.x() + rng.gen_range(-1.0..1.0),
                        cur.y() + rng.gen_range(-1.0..1.0),
                        cur.width(),
                        cur.height(),
                    )
                    .unwrap();
                }
                if rng.gen_bool(0.1) {
                    continue;
                }
                let id = frame.detections.len() as u32;
                frame.detections.push(Detection {
                    frame: frame.frame,
                    id,
                    bbox: cur,
                    score: rng.gen_range(-1.0..2.0),
                });
            }
        }
        let seq = validate_sequence(frames.clone(), first_box, &params).expect("well-formed instance");
        let mut store = TrackletStore::new();
        for f in seq.frames() {
            store.step(f, params.join_threshold).expect("in order");
        }
        if store.tracklets().len() <= max_tracklets {
            return (frames, first_box, params);
        }
    }
}
