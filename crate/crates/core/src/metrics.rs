//! Box-level evaluation.
//!
//! * `j_box`: mean IoU over frames where the target is present.
//! * Long-term precision/recall/F over prediction-confidence thresholds.
//!   Precision averages IoU over confident predictions (a prediction on a
//!   target-absent frame counts with IoU 0). Recall sums IoU of confident
//!   predictions over target-present frames and divides by their count.
//! * Short-term success (IoU strictly above 101 thresholds in `[0, 1]`) and
//!   precision (center error at most 0..=50 px) curves over target-present
//!   frames. Absent predictions have IoU 0 and infinite center error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{center_distance, iou};
use crate::model::{GroundTruth, TrackResult};

pub const SUCCESS_SAMPLES: usize = 101;
pub const PRECISION_MAX_PX: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LtPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub j_box: f64,
    pub lt_curve: Vec<LtPoint>,
    pub max_f: f64,
    /// `(overlap threshold, success rate)`
    pub success_curve: Vec<(f64, f64)>,
    pub success_auc: f64,
    /// `(pixel threshold, rate)`
    pub precision_curve: Vec<(f64, f64)>,
    pub precision_at_20: f64,
}

pub fn f_score(precision: f64, recall: f64) -> f64 {
    let denom = precision + recall;
    if denom > 0.0 {
        2.0 * precision * recall / denom
    } else {
        0.0
    }
}

fn check_lengths(pred: &TrackResult, gt: &GroundTruth) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::structural(format!(
            "track has {} frames but ground truth has {}",
            pred.len(),
            gt.len()
        )));
    }
    Ok(())
}

/// IoU per frame; 0 when either side is absent.
fn frame_ious(pred: &TrackResult, gt: &GroundTruth) -> Vec<f64> {
    pred.entries
        .iter()
        .zip(&gt.entries)
        .map(|(p, g)| match (p.bbox, g.bbox) {
            (Some(a), Some(b)) => iou(&a, &b),
            _ => 0.0,
        })
        .collect()
}

pub fn j_box(pred: &TrackResult, gt: &GroundTruth) -> Result<f64> {
    check_lengths(pred, gt)?;
    let ious = frame_ious(pred, gt);
    let mut sum = 0.0;
    let mut n = 0usize;
    for (v, g) in ious.iter().zip(&gt.entries) {
        if g.bbox.is_some() {
            sum += v;
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Long-term curve over the distinct confidences of present predictions,
/// ascending, and its maximum F.
pub fn lt_pr_re_f(pred: &TrackResult, gt: &GroundTruth) -> Result<(Vec<LtPoint>, f64)> {
    check_lengths(pred, gt)?;
    let ious = frame_ious(pred, gt);
    let n_present = gt.entries.iter().filter(|g| g.bbox.is_some()).count();

    // (confidence, iou, gt present) for every present prediction, sorted by
    // descending confidence so a single sweep accumulates each threshold.
    let mut items: Vec<(f64, f64, bool)> = pred
        .entries
        .iter()
        .zip(&gt.entries)
        .zip(&ious)
        .filter(|((p, _), _)| p.bbox.is_some())
        .map(|((p, g), &v)| (p.confidence, v, g.bbox.is_some()))
        .collect();
    items.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut curve = Vec::new();
    let mut count = 0usize;
    let mut iou_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut i = 0;
    while i < items.len() {
        let threshold = items[i].0;
        while i < items.len() && items[i].0 == threshold {
            let (_, v, present) = items[i];
            count += 1;
            iou_sum += v;
            if present {
                recall_sum += v;
            }
            i += 1;
        }
        let precision = iou_sum / count as f64;
        let recall = if n_present == 0 {
            0.0
        } else {
            recall_sum / n_present as f64
        };
        curve.push(LtPoint {
            threshold,
            precision,
            recall,
            f: f_score(precision, recall),
        });
    }
    curve.reverse();
    let max_f = curve.iter().map(|p| p.f).fold(0.0, f64::max);
    Ok((curve, max_f))
}

pub struct OtbCurves {
    pub success: Vec<(f64, f64)>,
    pub auc: f64,
    pub precision: Vec<(f64, f64)>,
    pub precision_at_20: f64,
}

pub fn success_thresholds() -> impl Iterator<Item = f64> {
    (0..SUCCESS_SAMPLES).map(|i| i as f64 / (SUCCESS_SAMPLES - 1) as f64)
}

pub fn otb_curves(pred: &TrackResult, gt: &GroundTruth) -> Result<OtbCurves> {
    check_lengths(pred, gt)?;
    let mut ious = Vec::new();
    let mut errors = Vec::new();
    for (p, g) in pred.entries.iter().zip(&gt.entries) {
        let Some(gb) = g.bbox else { continue };
        match p.bbox {
            Some(pb) => {
                ious.push(iou(&pb, &gb));
                errors.push(center_distance(&pb, &gb));
            }
            None => {
                ious.push(0.0);
                errors.push(f64::INFINITY);
            }
        }
    }
    let n = ious.len();
    let rate = |hits: usize| if n == 0 { 0.0 } else { hits as f64 / n as f64 };

    let success: Vec<(f64, f64)> = success_thresholds()
        .map(|th| (th, rate(ious.iter().filter(|&&v| v > th).count())))
        .collect();
    let auc = success.iter().map(|&(_, s)| s).sum::<f64>() / SUCCESS_SAMPLES as f64;
    let precision: Vec<(f64, f64)> = (0..=PRECISION_MAX_PX)
        .map(|px| {
            let px = px as f64;
            (px, rate(errors.iter().filter(|&&e| e <= px).count()))
        })
        .collect();
    let precision_at_20 = precision[20].1;
    Ok(OtbCurves {
        success,
        auc,
        precision,
        precision_at_20,
    })
}

pub fn evaluate(pred: &TrackResult, gt: &GroundTruth) -> Result<EvalReport> {
    let j = j_box(pred, gt)?;
    let (lt_curve, max_f) = lt_pr_re_f(pred, gt)?;
    let otb = otb_curves(pred, gt)?;
    Ok(EvalReport {
        j_box: j,
        lt_curve,
        max_f,
        success_curve: otb.success,
        success_auc: otb.auc,
        precision_curve: otb.precision,
        precision_at_20: otb.precision_at_20,
    })
}

/// Value of a long-term curve at an arbitrary threshold: the point at the
/// smallest own threshold at or above it, or zero rates beyond the largest.
fn lt_at(curve: &[LtPoint], threshold: f64) -> (f64, f64, f64) {
    let idx = curve.partition_point(|p| p.threshold < threshold);
    match curve.get(idx) {
        Some(p) => (p.precision, p.recall, p.f),
        None => (0.0, 0.0, 0.0),
    }
}

/// Dataset-level report: per-sequence scalars averaged unweighted; success and
/// precision curves averaged pointwise; long-term curves averaged pointwise
/// over the union of all sequences' thresholds.
pub fn summarize(reports: &[EvalReport]) -> Result<EvalReport> {
    if reports.is_empty() {
        return Err(Error::structural("cannot summarize zero reports"));
    }
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / n;

    let mut thresholds: Vec<f64> = reports
        .iter()
        .flat_map(|r| r.lt_curve.iter().map(|p| p.threshold))
        .collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let lt_curve = thresholds
        .into_iter()
        .map(|th| {
            let (mut pr, mut re, mut f) = (0.0, 0.0, 0.0);
            for r in reports {
                let (a, b, c) = lt_at(&r.lt_curve, th);
                pr += a;
                re += b;
                f += c;
            }
            LtPoint {
                threshold: th,
                precision: pr / n,
                recall: re / n,
                f: f / n,
            }
        })
        .collect();

    let average_curve = |get: &dyn Fn(&EvalReport) -> &Vec<(f64, f64)>| -> Vec<(f64, f64)> {
        let first = get(&reports[0]);
        (0..first.len())
            .map(|i| (first[i].0, reports.iter().map(|r| get(r)[i].1).sum::<f64>() / n))
            .collect()
    };

    Ok(EvalReport {
        j_box: mean(&|r| r.j_box),
        lt_curve,
        max_f: mean(&|r| r.max_f),
        success_curve: average_curve(&|r| &r.success_curve),
        success_auc: mean(&|r| r.success_auc),
        precision_curve: average_curve(&|r| &r.precision_curve),
        precision_at_20: mean(&|r| r.precision_at_20),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;
    use crate::model::{GtEntry, TrackEntry};
    use approx::assert_relative_eq;

    fn bx(x: f64) -> BoundingBox {
        BoundingBox::new(x, 0.0, 10.0, 10.0).unwrap()
    }

    fn gt_of(boxes: &[Option<BoundingBox>]) -> GroundTruth {
        GroundTruth {
            entries: boxes
                .iter()
                .enumerate()
                .map(|(frame, &bbox)| GtEntry { frame, bbox })
                .collect(),
        }
    }

    fn track_of(items: &[Option<(BoundingBox, f64)>]) -> TrackResult {
        TrackResult {
            entries: items
                .iter()
                .enumerate()
                .map(|(t, it)| match it {
                    Some((b, c)) => TrackEntry::present(t, *b, *c),
                    None => TrackEntry::absent(t),
                })
                .collect(),
        }
    }

    #[test]
    fn f_score_points() {
        assert_eq!(f_score(0.5, 0.5), 0.5);
        assert_relative_eq!(f_score(0.6, 0.3), 0.4, epsilon = 1e-15);
        assert_eq!(f_score(0.0, 0.0), 0.0);
    }

    #[test]
    fn j_box_examples() {
        let gt = gt_of(&[Some(bx(0.0)), Some(bx(0.0))]);
        let same = track_of(&[Some((bx(0.0), 1.0)), Some((bx(0.0), 1.0))]);
        assert_eq!(j_box(&same, &gt).unwrap(), 1.0);
        let none = track_of(&[None, None]);
        assert_eq!(j_box(&none, &gt).unwrap(), 0.0);
        let half = track_of(&[Some((bx(0.0), 1.0)), Some((bx(5.0), 1.0))]);
        assert_relative_eq!(j_box(&half, &gt).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert!(j_box(&track_of(&[None]), &gt).is_err());
    }

    #[test]
    fn j_box_skips_absent_gt() {
        let gt = gt_of(&[Some(bx(0.0)), None]);
        let t = track_of(&[Some((bx(0.0), 1.0)), Some((bx(50.0), 1.0))]);
        assert_eq!(j_box(&t, &gt).unwrap(), 1.0);
    }

    #[test]
    fn lt_perfect_tracker() {
        let gt = gt_of(&[Some(bx(0.0)), Some(bx(1.0)), Some(bx(2.0))]);
        let t = track_of(&[Some((bx(0.0), 0.9)), Some((bx(1.0), 0.5)), Some((bx(2.0), 0.7))]);
        let (curve, max_f) = lt_pr_re_f(&t, &gt).unwrap();
        assert_eq!(max_f, 1.0);
        // recall only reaches 1 at the lowest threshold
        assert_eq!(curve.len(), 3);
        assert_eq!(curve[0].threshold, 0.5);
        assert_eq!((curve[0].precision, curve[0].recall), (1.0, 1.0));
        assert!(curve.iter().all(|p| p.precision == 1.0));
        assert_relative_eq!(curve[2].recall, 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn lt_penalizes_hallucination() {
        // frame 1 target absent; prediction there counts in precision only
        let gt = gt_of(&[Some(bx(0.0)), None]);
        let t = track_of(&[Some((bx(0.0), 0.5)), Some((bx(0.0), 0.9))]);
        let (curve, max_f) = lt_pr_re_f(&t, &gt).unwrap();
        assert_eq!(curve[0].precision, 0.5);
        assert_eq!(curve[0].recall, 1.0);
        assert_eq!(curve[1].precision, 0.0);
        assert_eq!(curve[1].recall, 0.0);
        assert_relative_eq!(max_f, f_score(0.5, 1.0), epsilon = 1e-15);

        // absent prediction on absent frame contributes nothing
        let t = track_of(&[Some((bx(0.0), 0.5)), None]);
        let (curve, _) = lt_pr_re_f(&t, &gt).unwrap();
        assert_eq!((curve.len(), curve[0].precision), (1, 1.0));
    }

    #[test]
    fn otb_all_correct() {
        let gt = gt_of(&[Some(bx(0.0)); 4]);
        let t = track_of(&[Some((bx(0.0), 1.0)); 4]);
        let c = otb_curves(&t, &gt).unwrap();
        assert_eq!(c.success.len(), 101);
        assert_eq!(c.success[100], (1.0, 0.0));
        assert!(c.success[..100].iter().all(|&(_, s)| s == 1.0));
        assert_relative_eq!(c.auc, 100.0 / 101.0, epsilon = 1e-15);
        assert!(c.precision.iter().all(|&(_, r)| r == 1.0));
        assert_eq!(c.precision.len(), 51);
    }

    #[test]
    fn otb_all_absent_and_half() {
        let gt = gt_of(&[Some(bx(0.0)); 4]);
        let c = otb_curves(&track_of(&[None; 4]), &gt).unwrap();
        assert_eq!(c.auc, 0.0);
        assert!(c.precision.iter().all(|&(_, r)| r == 0.0));

        let t = track_of(&[
            Some((bx(0.0), 1.0)),
            Some((bx(500.0), 1.0)),
            Some((bx(0.0), 1.0)),
            None,
        ]);
        let c = otb_curves(&t, &gt).unwrap();
        assert!(c.success[..100].iter().all(|&(_, s)| s == 0.5));
        assert_relative_eq!(c.auc, 0.5 * 100.0 / 101.0, epsilon = 1e-15);
    }

    #[test]
    fn summarize_means() {
        let gt = gt_of(&[Some(bx(0.0)); 2]);
        let good = evaluate(&track_of(&[Some((bx(0.0), 1.0)); 2]), &gt).unwrap();
        let bad = evaluate(&track_of(&[None; 2]), &gt).unwrap();
        assert_eq!(summarize(std::slice::from_ref(&good)).unwrap(), good);
        let s = summarize(&[good.clone(), bad]).unwrap();
        assert_eq!(s.j_box, 0.5);
        assert!(s.success_curve[..100].iter().all(|&(_, v)| v == 0.5));
        assert!(summarize(&[]).is_err());

        let mut a = good.clone();
        a.j_box = 0.4;
        let mut b = good;
        b.j_box = 0.6;
        assert_eq!(summarize(&[a, b]).unwrap().j_box, 0.5);
    }
}
