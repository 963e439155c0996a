//! Frame and segment metrics: acc, acc-bg, IoU and IoD.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SegError};

/// Metrics of one video. Background-dependent values are `None` when the
/// ground truth has no non-background frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoMetrics {
    pub acc: f64,
    pub acc_bg: Option<f64>,
    pub iou: Option<f64>,
    pub iod: Option<f64>,
}

/// Unweighted means over videos; `None` entries are left out of their mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub videos: usize,
    pub acc: f64,
    pub acc_bg: Option<f64>,
    pub iou: Option<f64>,
    pub iod: Option<f64>,
}

/// Maximal runs of equal labels as `(label, start, end)` with `end` exclusive.
pub fn runs(labels: &[usize]) -> Vec<(usize, usize, usize)> {
    let mut out: Vec<(usize, usize, usize)> = Vec::new();
    for (t, &a) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(last) if last.0 == a => last.2 = t + 1,
            _ => out.push((a, t, t + 1)),
        }
    }
    out
}

fn check_lengths(pred: &[usize], gt: &[usize]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(SegError::Dimension {
            what: "predicted frames",
            expected: gt.len(),
            got: pred.len(),
        });
    }
    Ok(())
}

/// Scores a prediction against ground truth.
///
/// Each non-background ground-truth segment is matched to the predicted
/// segment of the same class with the largest overlap (a predicted segment
/// may serve several ground-truth segments). Without any overlapping
/// same-class segment both IoU and IoD of that segment are 0.
pub fn evaluate(pred: &[usize], gt: &[usize], background: Option<usize>) -> Result<VideoMetrics> {
    check_lengths(pred, gt)?;
    if gt.is_empty() {
        return Err(SegError::Precondition("cannot evaluate an empty video".into()));
    }
    let hits = pred.iter().zip(gt).filter(|(p, g)| p == g).count();
    let acc = hits as f64 / gt.len() as f64;
    let is_bg = |a: usize| Some(a) == background;

    let (fg_frames, fg_hits) = pred
        .iter()
        .zip(gt)
        .filter(|(_, &g)| !is_bg(g))
        .fold((0usize, 0usize), |(n, h), (p, g)| (n + 1, h + usize::from(p == g)));
    let acc_bg = (fg_frames > 0).then(|| fg_hits as f64 / fg_frames as f64);

    let pred_runs = runs(pred);
    let mut iou_sum = 0.0;
    let mut iod_sum = 0.0;
    let mut n_seg = 0usize;
    for (a, s, e) in runs(gt).into_iter().filter(|r| !is_bg(r.0)) {
        n_seg += 1;
        let best = pred_runs
            .iter()
            .filter(|r| r.0 == a)
            .map(|&(_, ps, pe)| (e.min(pe).saturating_sub(s.max(ps)), ps, pe))
            .fold(None::<(usize, usize, usize)>, |acc, c| match acc {
                Some(b) if b.0 >= c.0 => Some(b),
                _ => Some(c),
            });
        if let Some((inter, ps, pe)) = best.filter(|b| b.0 > 0) {
            let union = e.max(pe) - s.min(ps);
            iou_sum += inter as f64 / union as f64;
            iod_sum += inter as f64 / (pe - ps) as f64;
        }
    }
    let (iou, iod) = if n_seg > 0 {
        (Some(iou_sum / n_seg as f64), Some(iod_sum / n_seg as f64))
    } else {
        (None, None)
    };
    Ok(VideoMetrics { acc, acc_bg, iou, iod })
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (n, s) = values.flatten().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    (n > 0).then(|| s / n as f64)
}

pub fn aggregate(videos: &[VideoMetrics]) -> AggregateMetrics {
    AggregateMetrics {
        videos: videos.len(),
        acc: mean_of(videos.iter().map(|m| Some(m.acc))).unwrap_or(0.0),
        acc_bg: mean_of(videos.iter().map(|m| m.acc_bg)),
        iou: mean_of(videos.iter().map(|m| m.iou)),
        iod: mean_of(videos.iter().map(|m| m.iod)),
    }
}

/// Fraction of frames on which two labelings differ.
pub fn disagreement(a: &[usize], b: &[usize]) -> Result<f64> {
    check_lengths(a, b)?;
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count() as f64 / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let gt = [2, 0, 0, 1, 1, 2];
        let m = evaluate(&gt, &gt, Some(2)).unwrap();
        assert_eq!(
            m,
            VideoMetrics {
                acc: 1.0,
                acc_bg: Some(1.0),
                iou: Some(1.0),
                iod: Some(1.0)
            }
        );
    }

    #[test]
    fn shifted_segment() {
        // gt A on frames 1..=10, prediction A on 6..=15
        let mut gt = vec![1; 20];
        gt[..10].fill(0);
        let mut pred = vec![1; 20];
        pred[5..15].fill(0);
        let m = evaluate(&pred, &gt, Some(1)).unwrap();
        assert_eq!(m.iou, Some(1.0 / 3.0));
        assert_eq!(m.iod, Some(0.5));
    }

    #[test]
    fn all_background_has_no_segment_metrics() {
        let gt = [3, 3, 3];
        let m = evaluate(&[3, 1, 3], &gt, Some(3)).unwrap();
        assert!((m.acc - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!((m.acc_bg, m.iou, m.iod), (None, None, None));
    }

    #[test]
    fn missing_class_scores_zero() {
        // class 0 has no predicted segment; class 1 scores 2/4 on both
        let m = evaluate(&[1, 1, 1, 1], &[0, 0, 1, 1], None).unwrap();
        assert_eq!(m.iou, Some(0.25));
        assert_eq!(m.iod, Some(0.25));
    }

    #[test]
    fn one_prediction_can_match_several_segments() {
        let gt = [0, 0, 2, 0, 0];
        let pred = [0, 0, 0, 0, 0];
        let m = evaluate(&pred, &gt, Some(2)).unwrap();
        assert_eq!(m.iou, Some(0.4));
        assert_eq!(m.iod, Some(0.4));
    }

    #[test]
    fn aggregate_skips_absent_values() {
        let a = VideoMetrics {
            acc: 1.0,
            acc_bg: None,
            iou: None,
            iod: None,
        };
        let b = VideoMetrics {
            acc: 0.5,
            acc_bg: Some(0.25),
            iou: Some(0.5),
            iod: Some(1.0),
        };
        let g = aggregate(&[a, b]);
        assert_eq!(g.acc, 0.75);
        assert_eq!(g.acc_bg, Some(0.25));
        assert_eq!(g.iou, Some(0.5));
        assert_eq!(aggregate(&[b, a]), g);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(evaluate(&[0], &[0, 1], None).is_err());
    }
}
