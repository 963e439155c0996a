use std::cmp::Ordering;

use ndarray::Array2;

use crate::duration::{DurationModel, DurationScorer};
use crate::error::{Result, SegError};
use crate::grammar::{Grammar, NodeId, ROOT};
use crate::scores::frame_log_likelihoods;
use crate::types::{cmp_scores, ProbabilityStream, Segment, SegmentPath, Transcript};

/// Best segmentation and its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub path: SegmentPath,
    pub log_score: f64,
}

/// Prefix sums of frame scores per action: `cum[a][t] = sum_{tau < t} scores[tau][a]`.
#[derive(Debug, Clone)]
pub(crate) struct CumulativeScores {
    width: usize,
    data: Vec<f64>,
}

impl CumulativeScores {
    pub(crate) fn new(scores: &Array2<f64>) -> Self {
        let (t_len, n_act) = scores.dim();
        let width = t_len + 1;
        let mut data = vec![0.0; n_act * width];
        for a in 0..n_act {
            let row = &mut data[a * width..(a + 1) * width];
            for t in 0..t_len {
                row[t + 1] = row[t] + scores[[t, a]];
            }
        }
        CumulativeScores { width, data }
    }

    /// Sum of scores of action `a` over frames `[s, e)`.
    #[inline]
    pub(crate) fn span(&self, a: usize, s: usize, e: usize) -> f64 {
        let row = &self.data[a * self.width..(a + 1) * self.width];
        row[e] - row[s]
    }
}

pub(crate) fn check_inputs(scores: &Array2<f64>, dm: &DurationModel, g: &Grammar) -> Result<()> {
    let n_act = scores.ncols();
    if dm.num_actions() != n_act {
        return Err(SegError::Dimension {
            what: "actions in duration model",
            expected: n_act,
            got: dm.num_actions(),
        });
    }
    if g.action_bound() > n_act {
        return Err(SegError::Precondition(format!(
            "grammar references action {} but scores cover {n_act} actions",
            g.action_bound() - 1
        )));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(SegError::Precondition("frame scores must be finite".into()));
    }
    Ok(())
}

/// Grammar-constrained semi-Markov Viterbi over arbitrary frame scores.
///
/// Maximizes `sum_t scores[t][a_n(t)] + duration_weight * sum_n ln Poisson(l_n; lambda_{a_n})`
/// over every full transcript of `g` and every split of the frames into
/// segments of length >= 1.
///
/// Ties (scores within [`crate::types::TIE_TOLERANCE`]): the DP prefers the shorter segment at every split point; among
/// complete paths, lower final action, then shorter final segment, then the
/// lower trie node id.
pub fn decode_scores(scores: &Array2<f64>, dm: &DurationModel, g: &Grammar, duration_weight: f64) -> Result<Decoded> {
    check_inputs(scores, dm, g)?;
    let t_len = scores.nrows();
    if t_len < g.min_transcript_len() {
        return Err(SegError::Infeasible(format!(
            "{t_len} frames cannot hold a transcript of {} segments",
            g.min_transcript_len()
        )));
    }
    let cum = CumulativeScores::new(scores);
    let dur = DurationScorer::new(dm, t_len);
    let n_nodes = g.num_nodes();
    let width = t_len + 1;
    // best[k][e]: best score with node k's segment ending right before frame e
    let mut best = vec![f64::NEG_INFINITY; n_nodes * width];
    let mut back = vec![usize::MAX; n_nodes * width];
    best[ROOT * width] = 0.0;

    for k in 1..n_nodes {
        let node = g.node(k);
        let p = node.parent.expect("non-root node has a parent");
        let a = node.action;
        let depth = node.depth;
        for e in depth..=t_len {
            let mut bv = f64::NEG_INFINITY;
            let mut bs = usize::MAX;
            for s in (depth - 1..e).rev() {
                let prev = best[p * width + s];
                if prev == f64::NEG_INFINITY {
                    continue;
                }
                let v = prev + cum.span(a, s, e) + duration_weight * dur.poisson(a, e - s);
                if bs == usize::MAX || cmp_scores(v, bv) == Ordering::Greater {
                    bv = v;
                    bs = s;
                }
            }
            best[k * width + e] = bv;
            back[k * width + e] = bs;
        }
    }

    let mut winner: Option<(f64, usize, usize, NodeId)> = None;
    for k in 1..n_nodes {
        let node = g.node(k);
        if !node.terminal {
            continue;
        }
        let v = best[k * width + t_len];
        if v == f64::NEG_INFINITY {
            continue;
        }
        let last_len = t_len - back[k * width + t_len];
        let better = match winner {
            None => true,
            Some((bv, ba, bl, _)) => match cmp_scores(v, bv) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => (node.action, last_len) < (ba, bl),
            },
        };
        if better {
            winner = Some((v, node.action, last_len, k));
        }
    }
    let (log_score, _, _, mut k) =
        winner.ok_or_else(|| SegError::Infeasible(format!("no transcript fits in {t_len} frames")))?;

    let mut segments = Vec::new();
    let mut e = t_len;
    while k != ROOT {
        let s = back[k * width + e];
        segments.push(Segment {
            action: g.node(k).action,
            len: e - s,
        });
        e = s;
        k = g.node(k).parent.expect("non-root node has a parent");
    }
    segments.reverse();
    Ok(Decoded {
        path: SegmentPath::new(segments)?,
        log_score,
    })
}

/// Offline decoding of a probability stream.
///
/// With `constrain_to` set, the grammar is replaced by that single transcript
/// (training-time alignment to the known action order).
pub fn offline_decode(
    stream: &ProbabilityStream,
    dm: &DurationModel,
    g: &Grammar,
    constrain_to: Option<&Transcript>,
) -> Result<Decoded> {
    let scores = frame_log_likelihoods(stream, dm)?;
    match constrain_to {
        Some(tr) => decode_scores(&scores, dm, &Grammar::single(tr.clone()), 1.0),
        None => decode_scores(&scores, dm, g, 1.0),
    }
}

/// Objective value of a given path under the offline scoring rule.
pub fn path_objective(
    scores: &Array2<f64>,
    dm: &DurationModel,
    path: &SegmentPath,
    duration_weight: f64,
) -> Result<f64> {
    if path.total_frames() != scores.nrows() {
        return Err(SegError::Dimension {
            what: "path frames",
            expected: scores.nrows(),
            got: path.total_frames(),
        });
    }
    let dur = DurationScorer::new(dm, scores.nrows());
    let mut t = 0;
    let mut total = 0.0;
    for seg in path.segments() {
        for tau in t..t + seg.len {
            total += scores[[tau, seg.action]];
        }
        total += duration_weight * dur.poisson(seg.action, seg.len);
        t += seg.len;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tr(v: &[usize]) -> Transcript {
        Transcript::new(v.to_vec()).unwrap()
    }

    #[test]
    fn two_frame_split() {
        let s = ProbabilityStream::new(array![[0.9, 0.1], [0.1, 0.9]]).unwrap();
        let dm = DurationModel::uniform(2, 1.0).unwrap();
        let g = Grammar::new([tr(&[0, 1])]).unwrap();
        let d = offline_decode(&s, &dm, &g, None).unwrap();
        assert_eq!(d.path, SegmentPath::from_pairs(&[(0, 1), (1, 1)]).unwrap());
        let scores = frame_log_likelihoods(&s, &dm).unwrap();
        let obj = path_objective(&scores, &dm, &d.path, 1.0).unwrap();
        assert!((obj - d.log_score).abs() < 1e-12);
    }

    #[test]
    fn single_action_grammar_takes_everything() {
        let s = ProbabilityStream::new(array![[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]]).unwrap();
        let dm = DurationModel::uniform(2, 2.0).unwrap();
        let g = Grammar::new([tr(&[0])]).unwrap();
        let d = offline_decode(&s, &dm, &g, None).unwrap();
        assert_eq!(d.path, SegmentPath::from_pairs(&[(0, 3)]).unwrap());
    }

    #[test]
    fn infeasible_when_video_too_short() {
        let s = ProbabilityStream::new(array![[0.5, 0.5]]).unwrap();
        let dm = DurationModel::uniform(2, 2.0).unwrap();
        let g = Grammar::new([tr(&[0, 1])]).unwrap();
        assert!(matches!(
            offline_decode(&s, &dm, &g, None),
            Err(SegError::Infeasible(_))
        ));
    }

    #[test]
    fn constraint_overrides_grammar() {
        let s = ProbabilityStream::new(array![[0.9, 0.1], [0.9, 0.1], [0.9, 0.1]]).unwrap();
        let dm = DurationModel::uniform(2, 1.5).unwrap();
        let g = Grammar::new([tr(&[0])]).unwrap();
        let d = offline_decode(&s, &dm, &g, Some(&tr(&[1, 0]))).unwrap();
        assert_eq!(d.path.actions(), vec![1, 0]);
    }
}
