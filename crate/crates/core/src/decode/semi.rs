use crate::decode::offline::offline_decode;
use crate::decode::online::{online_decode_full, OnlineOutput};
use crate::duration::DurationModel;
use crate::error::{Result, SegError};
use crate::grammar::Grammar;
use crate::types::ProbabilityStream;

/// Fixed-delay labels from already computed online and offline results.
///
/// With `delay = 0` the online labels are returned unchanged. Otherwise the
/// label of frame `t` (1-based) is read from the inference run at time
/// `t + delay`: the online prefix path while `t + delay < T`, and the
/// offline segmentation once the end of the video has been observed.
pub fn semi_online_labels(online: &OnlineOutput, offline_labels: &[usize], delay: usize) -> Result<Vec<usize>> {
    let t_len = online.labels.len();
    if offline_labels.len() != t_len || online.paths.len() != t_len {
        return Err(SegError::Dimension {
            what: "offline labels",
            expected: t_len,
            got: offline_labels.len(),
        });
    }
    if delay == 0 {
        return Ok(online.labels.clone());
    }
    Ok((0..t_len)
        .map(|t| {
            let decided_at = t + 1 + delay;
            if decided_at >= t_len {
                offline_labels[t]
            } else {
                online.paths[decided_at - 1]
                    .label_at(t)
                    .expect("prefix path covers every earlier frame")
            }
        })
        .collect())
}

pub fn semi_online_decode(
    stream: &ProbabilityStream,
    dm: &DurationModel,
    g: &Grammar,
    delay: usize,
) -> Result<Vec<usize>> {
    let online = online_decode_full(stream, dm, g)?;
    if delay == 0 {
        return Ok(online.labels);
    }
    let offline = offline_decode(stream, dm, g, None)?.path.expand();
    semi_online_labels(&online, &offline, delay)
}
