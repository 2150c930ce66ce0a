use boltrack::geometry::{center_distance, ff_score, iou};
use boltrack::io;
use boltrack::metrics::{self, SUCCESS_SAMPLES};
use boltrack::rescore::{detection_contribution, hypothesis_score, run_no_rescoring, run_sequence, Engine};
use boltrack::synth::{self, ScenarioSpec};
use boltrack::{validate_sequence, BoundingBox, Detection, FrameDetections, Hyperparams, TrackEntry, TrackResult};
use proptest::prelude::*;
use tempfile::TempDir;

fn arb_box() -> impl Strategy<Value = BoundingBox> {
    (-500.0..500.0f64, -500.0..500.0f64, 0.5..300.0f64, 0.5..300.0f64)
        .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, w, h).unwrap())
}

fn scaled(b: &BoundingBox, k: f64) -> BoundingBox {
    BoundingBox::new(b.x() * k, b.y() * k, b.width() * k, b.height() * k).unwrap()
}

fn shifted(b: &BoundingBox, dx: f64, dy: f64) -> BoundingBox {
    BoundingBox::new(b.x() + dx, b.y() + dy, b.width(), b.height()).unwrap()
}

proptest! {
    #[test]
    fn iou_bounds_and_symmetry(a in arb_box(), b in arb_box()) {
        let v = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, iou(&b, &a));
        prop_assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn iou_translation_and_scale_invariant(
        a in arb_box(), b in arb_box(), dx in -100.0..100.0f64, dy in -100.0..100.0f64, k in 0.1..10.0f64
    ) {
        let base = iou(&a, &b);
        prop_assert!((iou(&shifted(&a, dx, dy), &shifted(&b, dx, dy)) - base).abs() < 1e-9);
        prop_assert!((iou(&scaled(&a, k), &scaled(&b, k)) - base).abs() < 1e-9);
    }

    #[test]
    fn ff_score_bounded_and_scale_free(a in arb_box(), b in arb_box(), alpha in -1.0..1.0f64, k in 0.1..10.0f64) {
        let v = ff_score(&a, &b, alpha);
        prop_assert!(v <= 1.0 - alpha);
        prop_assert!((ff_score(&scaled(&a, k), &b, alpha) - v).abs() < 1e-12);
        prop_assert!((ff_score(&a, &scaled(&b, k), alpha) - v).abs() < 1e-12);
        prop_assert!((ff_score(&a, &scaled(&a, k), alpha) - (1.0 - alpha)).abs() < 1e-12);
    }

    #[test]
    fn center_distance_is_a_metric(a in arb_box(), b in arb_box(), c in arb_box()) {
        let ab = center_distance(&a, &b);
        prop_assert_eq!(ab, center_distance(&b, &a));
        prop_assert!(ab <= center_distance(&a, &c) + center_distance(&c, &b) + 1e-9);
    }

    #[test]
    fn track_file_round_trip(items in prop::collection::vec(prop::option::of((arb_box(), -5.0..5.0f64)), 1..40)) {
        let track = TrackResult {
            entries: items
                .iter()
                .enumerate()
                .map(|(t, it)| match it {
                    Some((b, c)) => TrackEntry::present(t, *b, *c),
                    None => TrackEntry::absent(t),
                })
                .collect(),
        };
        let dir = TempDir::new().unwrap();
        let p = dir.path().join("t.csv");
        io::write_track(&track, &p).unwrap();
        prop_assert_eq!(io::read_track(&p).unwrap(), track);
    }

    #[test]
    fn max_f_invariant_under_monotone_confidence_map(seed in 0u64..10_000) {
        let spec = ScenarioSpec { frames: 120, n_disappearances: 2, mean_absence: 10.0, n_distractors: 2,
            distractor_mean_visible: 10.0, distractor_mean_hidden: 10.0, detection_noise: 2.0, score_noise: 0.2, seed, ..ScenarioSpec::default() };
        let s = synth::generate(&spec).unwrap();
        let p = Hyperparams::default();
        let track = run_sequence(&s.sequence(&p).unwrap(), &p).unwrap();
        let mut mapped = track.clone();
        for e in &mut mapped.entries {
            if e.bbox.is_some() {
                e.confidence = (3.0 * e.confidence).exp() + 1.0;
            }
        }
        let (_, a) = metrics::lt_pr_re_f(&track, &s.ground_truth).unwrap();
        let (_, b) = metrics::lt_pr_re_f(&mapped, &s.ground_truth).unwrap();
        prop_assert_eq!(a, b);
    }
}

fn scenario(seed: u64, frames: usize) -> synth::Scenario {
    synth::generate(&ScenarioSpec {
        frames,
        n_disappearances: 3,
        mean_absence: 8.0,
        n_distractors: 3,
        distractor_mean_visible: 12.0,
        distractor_mean_hidden: 8.0,
        detection_noise: 2.0,
        score_noise: 0.1,
        miss_rate: 0.05,
        seed,
        ..ScenarioSpec::default()
    })
    .unwrap()
}

#[test]
fn tracklets_partition_detections() {
    let p = Hyperparams::default();
    for seed in 0..20 {
        let seq = scenario(seed, 200).sequence(&p).unwrap();
        let mut e = Engine::new(seq.first_box(), p.clone()).unwrap();
        for f in seq.frames() {
            e.push(f).unwrap();
        }
        let mut seen: Vec<(usize, u32)> = Vec::new();
        for t in e.store().tracklets() {
            t.check_invariants(p.join_threshold).unwrap();
            seen.extend(t.detections.iter().map(|d| (d.frame, d.id)));
        }
        seen.sort_unstable();
        let mut all: Vec<(usize, u32)> = seq
            .frames()
            .iter()
            .flat_map(|f| f.detections.iter().map(|d| (d.frame, d.id)))
            .collect();
        all.sort_unstable();
        assert_eq!(seen, all, "seed {seed}");
    }
}

#[test]
fn streaming_matches_prefix_recompute() {
    let p = Hyperparams::default();
    for seed in 0..5 {
        let seq = scenario(seed, 120).sequence(&p).unwrap();
        let full = run_sequence(&seq, &p).unwrap();
        for k in 1..=seq.len() {
            let prefix = run_sequence(&seq.prefix(k), &p).unwrap();
            assert_eq!(prefix.entries[..], full.entries[..k], "seed {seed} prefix {k}");
        }
    }
}

#[test]
fn closed_hypotheses_are_frozen() {
    let p = Hyperparams::default();
    let seq = scenario(9, 150).sequence(&p).unwrap();
    let ff = seq.first_box();
    let mut e = Engine::new(ff, p.clone()).unwrap();
    for f in seq.frames() {
        let before: Vec<f64> = (0..e.store().tracklets().len())
            .map(|i| e.hypothesis_score(boltrack::TrackletId(i)))
            .collect();
        e.push(f).unwrap();
        for (i, old) in before.iter().enumerate() {
            let id = boltrack::TrackletId(i);
            let now = e.hypothesis_score(id);
            if e.store().is_live(id) {
                let added = detection_contribution(e.store().get(id).last(), &ff, &p);
                assert!((now - old - added).abs() < 1e-9);
            } else {
                assert_eq!(now, *old);
            }
        }
    }
}

#[test]
fn constant_score_shift() {
    let p = Hyperparams::default();
    let s = scenario(4, 100);
    let seq = s.sequence(&p).unwrap();
    let c = 0.37;
    let shifted: Vec<FrameDetections> = seq
        .frames()
        .iter()
        .map(|f| FrameDetections {
            frame: f.frame,
            detections: f.detections.iter().map(|d| Detection { score: d.score + c, ..*d }).collect(),
        })
        .collect();
    let run = |frames: &[FrameDetections]| {
        let mut e = Engine::new(seq.first_box(), p.clone()).unwrap();
        for f in frames {
            e.push(f).unwrap();
        }
        e
    };
    let a = run(seq.frames());
    let b = run(&shifted);
    assert_eq!(a.store().tracklets().len(), b.store().tracklets().len());
    for (ta, tb) in a.store().tracklets().iter().zip(b.store().tracklets()) {
        let fa: Vec<(usize, u32)> = ta.detections.iter().map(|d| (d.frame, d.id)).collect();
        let fb: Vec<(usize, u32)> = tb.detections.iter().map(|d| (d.frame, d.id)).collect();
        assert_eq!(fa, fb);
    }
    // any fixed chain shifts by c per member detection
    for t in a.store().tracklets() {
        let h = a.hypothesis(t.id);
        let chain_a: Vec<_> = h.tracklets.iter().map(|&id| a.store().get(id)).collect();
        let chain_b: Vec<_> = h.tracklets.iter().map(|&id| b.store().get(id)).collect();
        let n: usize = chain_a.iter().map(|t| t.len()).sum();
        let sa = hypothesis_score(&chain_a, &seq.first_box(), &p).unwrap();
        let sb = hypothesis_score(&chain_b, &seq.first_box(), &p).unwrap();
        assert!((sb - sa - c * n as f64).abs() < 1e-9);
    }
}

#[test]
fn equal_length_argmax_unchanged_by_shift() {
    // Parallel tracklets over identical frame ranges: every hypothesis is a
    // single tracklet of the same length.
    let ff = BoundingBox::new(0.0, 0.0, 20.0, 40.0).unwrap();
    let p = Hyperparams::default();
    let shapes = [(20.0, 40.0), (30.0, 30.0), (25.0, 45.0), (40.0, 20.0)];
    let scores = [0.9, 1.1, 0.8, 1.3];
    let frames = |c: f64| -> Vec<FrameDetections> {
        (0..15)
            .map(|t| FrameDetections {
                frame: t,
                detections: shapes
                    .iter()
                    .zip(scores)
                    .enumerate()
                    .map(|(i, (&(w, h), s))| Detection {
                        frame: t,
                        id: i as u32,
                        bbox: BoundingBox::new(200.0 * i as f64 + t as f64 * 0.1, 0.0, w, h).unwrap(),
                        score: s + c,
                    })
                    .collect(),
            })
            .collect()
    };
    let best = |c: f64| {
        let mut e = Engine::new(ff, p.clone()).unwrap();
        for f in frames(c) {
            e.push(&f).unwrap();
        }
        assert_eq!(e.store().tracklets().len(), 4);
        e.global_best().unwrap().tracklets
    };
    let base = best(0.0);
    for c in [-2.0, -0.5, 0.25, 3.0] {
        assert_eq!(best(c), base);
    }
}

#[test]
fn zero_weights_collapse_to_argmax() {
    let p = Hyperparams {
        w_bnd: 0.0,
        w_ff: 0.0,
        join_threshold: 1.0,
        ..Hyperparams::default()
    };
    for seed in 0..10 {
        let seq = scenario(seed, 150).sequence(&p).unwrap();
        let baseline = run_no_rescoring(&seq);
        let mut e = Engine::new(seq.first_box(), p.clone()).unwrap();
        for f in seq.frames() {
            let out = e.push(f).unwrap();
            let best = e.global_best().unwrap();
            let last = e.store().get(*best.tracklets.last().unwrap());
            if f.frame > 0 {
                assert!(e.store().tracklets().iter().filter(|t| t.start() == f.frame).all(|t| t.len() == 1));
            }
            if last.end() == f.frame {
                assert_eq!(out, baseline.entries[f.frame], "seed {seed} frame {}", f.frame);
            }
        }
    }
}

#[test]
fn identical_inputs_identical_output_text() {
    let p = Hyperparams::default();
    let seq = scenario(21, 300).sequence(&p).unwrap();
    let a = io::format_track(&run_sequence(&seq, &p).unwrap());
    let b = io::format_track(&run_sequence(&seq, &p).unwrap());
    assert_eq!(a, b);
}

#[test]
fn horizon_never_helps_more_than_unlimited() {
    let p = Hyperparams::default();
    let limited = Hyperparams {
        predecessor_horizon: Some(5),
        ..p.clone()
    };
    let seq = scenario(2, 200).sequence(&p).unwrap();
    let run = |params: &Hyperparams| {
        let mut e = Engine::new(seq.first_box(), params.clone()).unwrap();
        for f in seq.frames() {
            e.push(f).unwrap();
        }
        e
    };
    let (a, b) = (run(&p), run(&limited));
    for t in a.store().tracklets() {
        assert!(b.hypothesis_score(t.id) <= a.hypothesis_score(t.id) + 1e-9);
        let h = b.hypothesis(t.id);
        for pair in h.tracklets.windows(2) {
            let gap = b.store().get(pair[1]).start() - b.store().get(pair[0]).end();
            assert!(gap <= 5);
        }
    }
}

#[test]
fn sequence_file_round_trip() {
    let p = Hyperparams::default();
    let s = scenario(8, 80);
    let seq = s.sequence(&p).unwrap();
    let dir = TempDir::new().unwrap();
    for format in [io::DetectionFormat::Csv, io::DetectionFormat::Jsonl] {
        let path = dir.path().join(format!("d.{}", format.extension()));
        io::write_detections(seq.frames(), &path, format).unwrap();
        let mut frames = io::read_detections(&path).unwrap();
        frames.resize_with(seq.len(), Default::default);
        for (i, f) in frames.iter_mut().enumerate() {
            f.frame = i;
        }
        let again = validate_sequence(frames, seq.first_box(), &p).unwrap();
        assert_eq!(again, seq);
    }
}

#[test]
fn metrics_replay_from_files() {
    let p = Hyperparams::default();
    let dir = TempDir::new().unwrap();
    for seed in 0..5 {
        let s = scenario(seed, 150);
        let track = run_sequence(&s.sequence(&p).unwrap(), &p).unwrap();
        let streamed = metrics::evaluate(&track, &s.ground_truth).unwrap();
        let tp = dir.path().join("t.csv");
        let gp = dir.path().join("g.csv");
        io::write_track(&track, &tp).unwrap();
        io::write_ground_truth(&s.ground_truth, &gp).unwrap();
        let replay = metrics::evaluate(&io::read_track(&tp).unwrap(), &io::read_ground_truth(&gp).unwrap()).unwrap();
        assert_eq!(streamed, replay);
        let files = io::write_report(&streamed, dir.path()).unwrap();
        assert_eq!(io::read_report(&files.json).unwrap(), streamed);
    }
}

#[test]
fn success_curve_properties_against_recount() {
    let p = Hyperparams::default();
    for seed in 0..20 {
        let s = scenario(seed, 100);
        let track = run_no_rescoring(&s.sequence(&p).unwrap());
        let c = metrics::otb_curves(&track, &s.ground_truth).unwrap();
        assert!(c.success.windows(2).all(|w| w[1].1 <= w[0].1));
        assert!((0.0..=1.0).contains(&c.auc));

        let ious: Vec<f64> = track
            .entries
            .iter()
            .zip(&s.ground_truth.entries)
            .filter_map(|(t, g)| g.bbox.map(|gb| t.bbox.map_or(0.0, |tb| iou(&tb, &gb))))
            .collect();
        // per frame: number of sampled thresholds strictly below its IoU
        let recount: f64 = ious
            .iter()
            .map(|&v| (0..SUCCESS_SAMPLES).filter(|&i| v > i as f64 / 100.0).count() as f64)
            .sum::<f64>()
            / (SUCCESS_SAMPLES as f64 * ious.len() as f64);
        assert!((recount - c.auc).abs() < 1e-12);
        let mean_iou = ious.iter().sum::<f64>() / ious.len() as f64;
        assert!((c.auc - mean_iou).abs() <= 1.0 / 101.0 + 1e-12);
    }
}
