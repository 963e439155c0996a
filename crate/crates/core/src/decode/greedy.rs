use crate::error::{Result, SegError};
use crate::types::ProbabilityStream;

/// Sliding-window argmax: the label at frame `t` is the action with the
/// highest mean posterior over the last `window` frames (fewer at the start).
/// No grammar and no duration model; ties go to the lower action index.
pub fn greedy_decode(stream: &ProbabilityStream, window: usize) -> Result<Vec<usize>> {
    if window == 0 {
        return Err(SegError::Precondition("greedy window must be >= 1".into()));
    }
    let post = stream.posteriors();
    let n_act = stream.num_actions();
    let mut sums = vec![0.0; n_act];
    let mut labels = Vec::with_capacity(stream.num_frames());
    for t in 0..stream.num_frames() {
        let lo = (t + 1).saturating_sub(window);
        sums.iter_mut().for_each(|s| *s = 0.0);
        for tau in lo..=t {
            for (s, p) in sums.iter_mut().zip(post.row(tau)) {
                *s += p;
            }
        }
        let mut best = 0;
        for a in 1..n_act {
            if sums[a] > sums[best] {
                best = a;
            }
        }
        labels.push(best);
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn window_one_is_per_frame_argmax() {
        let s = ProbabilityStream::new(array![[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(greedy_decode(&s, 1).unwrap(), vec![1, 0, 1]);
    }

    #[test]
    fn window_averages_and_ties_go_low() {
        let s = ProbabilityStream::new(array![[0.6, 0.4], [0.6, 0.4], [0.1, 0.9]]).unwrap();
        // frame 3: mean A = 1.3/3, mean B = 1.7/3
        assert_eq!(greedy_decode(&s, 3).unwrap(), vec![0, 0, 1]);
        let s = ProbabilityStream::new(array![[0.75, 0.25], [0.25, 0.75]]).unwrap();
        // frame 2 over both rows: exact tie 1.0 vs 1.0
        assert_eq!(greedy_decode(&s, 2).unwrap(), vec![0, 0]);
        assert!(greedy_decode(&s, 0).is_err());
    }
}
