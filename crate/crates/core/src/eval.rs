//! Test-time inference over datasets, latency sweeps and evaluation reports.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::LinearSoftmaxModel;
use crate::decode::{
    decode_scores, greedy_decode, online_decode_scores, semi_online_labels, OnlineConfig, OnlineOutput,
};
use crate::duration::DurationModel;
use crate::error::{Result, SegError};
use crate::grammar::Grammar;
use crate::metrics::{aggregate, disagreement, evaluate, AggregateMetrics, VideoMetrics};
use crate::scores::frame_log_likelihoods;
use crate::types::ProbabilityStream;

/// Fixed delay in frames, or a fraction of each video's length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Delay {
    Frames(usize),
    Fraction(f64),
}

impl Delay {
    /// Delay in frames for a video of `t_len` frames.
    pub fn resolve(self, t_len: usize) -> usize {
        match self {
            Delay::Frames(d) => d,
            Delay::Fraction(f) => (f * t_len as f64).floor() as usize,
        }
    }
}

impl fmt::Display for Delay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Delay::Frames(d) => write!(f, "{d}"),
            Delay::Fraction(x) if *x == 1.0 => write!(f, "T"),
            Delay::Fraction(x) => write!(f, "{x}T"),
        }
    }
}

impl FromStr for Delay {
    type Err = SegError;

    /// Accepts `12` (frames), `T`, `T/4` and `0.25T`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || SegError::Config(format!("invalid delay {s:?}: expected frames, T, T/k or xT"));
        if s == "T" {
            return Ok(Delay::Fraction(1.0));
        }
        if let Some(k) = s.strip_prefix("T/") {
            let k: f64 = k.parse().map_err(|_| bad())?;
            return if k > 0.0 {
                Ok(Delay::Fraction(1.0 / k))
            } else {
                Err(bad())
            };
        }
        if let Some(x) = s.strip_suffix('T') {
            let x: f64 = x.parse().map_err(|_| bad())?;
            return if x >= 0.0 && x.is_finite() {
                Ok(Delay::Fraction(x))
            } else {
                Err(bad())
            };
        }
        s.parse().map(Delay::Frames).map_err(|_| bad())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Decoder {
    Online,
    Offline,
    Greedy { window: usize },
    Semi { delay: Delay },
}

impl fmt::Display for Decoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decoder::Online => write!(f, "online"),
            Decoder::Offline => write!(f, "offline"),
            Decoder::Greedy { window } => write!(f, "greedy(window={window})"),
            Decoder::Semi { delay } => write!(f, "semi(delay={delay})"),
        }
    }
}

/// Everything test-time inference needs. Decoding is always single-view.
#[derive(Debug, Clone)]
pub struct InferenceModel<'a> {
    pub model: &'a LinearSoftmaxModel,
    pub durations: &'a DurationModel,
    pub grammar: &'a Grammar,
    pub online: OnlineConfig,
}

/// Online and offline decodes of one stream, from which every decoder's output follows.
#[derive(Debug, Clone)]
pub struct StreamDecodes {
    pub online: OnlineOutput,
    pub offline: Vec<usize>,
}

impl InferenceModel<'_> {
    pub fn decode_all(&self, stream: &ProbabilityStream) -> Result<StreamDecodes> {
        let scores = frame_log_likelihoods(stream, self.durations)?;
        let online = online_decode_scores(&scores, self.durations, self.grammar, &self.online)?;
        let offline = decode_scores(&scores, self.durations, self.grammar, 1.0)?.path.expand();
        Ok(StreamDecodes { online, offline })
    }

    pub fn labels(&self, stream: &ProbabilityStream, decoder: Decoder) -> Result<Vec<usize>> {
        let scores = frame_log_likelihoods(stream, self.durations)?;
        match decoder {
            Decoder::Greedy { window } => greedy_decode(stream, window),
            Decoder::Offline => Ok(decode_scores(&scores, self.durations, self.grammar, 1.0)?.path.expand()),
            Decoder::Online => Ok(online_decode_scores(&scores, self.durations, self.grammar, &self.online)?.labels),
            Decoder::Semi { delay } => {
                let d = self.decode_all(stream)?;
                semi_online_labels(&d.online, &d.offline, delay.resolve(stream.num_frames()))
            }
        }
    }
}

/// Evaluation input for one video.
#[derive(Debug, Clone)]
pub struct EvalVideo {
    pub id: String,
    pub stream: ProbabilityStream,
    pub ground_truth: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub id: String,
    pub frames: usize,
    #[serde(flatten)]
    pub metrics: VideoMetrics,
    /// Absent when scoring fixed label files.
    pub online_offline_disagreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoFailure {
    pub id: String,
    pub error: String,
}

pub const REPORT_FORMAT: &str = "onseg-eval";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format: String,
    pub version: u32,
    pub decoder: String,
    pub videos: Vec<VideoRecord>,
    pub failures: Vec<VideoFailure>,
    pub aggregate: AggregateMetrics,
    /// Mean over videos of the fraction of frames where online and offline labels differ.
    pub online_offline_disagreement: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (n, s) = values.fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Decodes and scores every video. Per-video errors (length mismatches,
/// infeasible grammars) are collected instead of aborting the report.
pub fn evaluate_dataset(
    im: &InferenceModel<'_>,
    videos: &[EvalVideo],
    decoder: Decoder,
    background: Option<usize>,
) -> EvalReport {
    let results: Vec<std::result::Result<VideoRecord, VideoFailure>> = videos
        .par_iter()
        .map(|v| {
            let run = || -> Result<VideoRecord> {
                let d = im.decode_all(&v.stream)?;
                let pred = match decoder {
                    Decoder::Online => d.online.labels.clone(),
                    Decoder::Offline => d.offline.clone(),
                    Decoder::Greedy { window } => greedy_decode(&v.stream, window)?,
                    Decoder::Semi { delay } => {
                        semi_online_labels(&d.online, &d.offline, delay.resolve(v.stream.num_frames()))?
                    }
                };
                Ok(VideoRecord {
                    id: v.id.clone(),
                    frames: v.stream.num_frames(),
                    metrics: evaluate(&pred, &v.ground_truth, background)?,
                    online_offline_disagreement: Some(disagreement(&d.online.labels, &d.offline)?),
                })
            };
            run().map_err(|e| VideoFailure {
                id: v.id.clone(),
                error: e.to_string(),
            })
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(f) => failures.push(f),
        }
    }
    let metrics: Vec<VideoMetrics> = records.iter().map(|r| r.metrics).collect();
    EvalReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        decoder: decoder.to_string(),
        aggregate: aggregate(&metrics),
        online_offline_disagreement: Some(mean(records.iter().flat_map(|r| r.online_offline_disagreement))),
        videos: records,
        failures,
    }
}

/// Scores fixed predictions (one label sequence per video) against ground truth.
pub fn evaluate_predictions(
    ids: &[String],
    predictions: &[Vec<usize>],
    ground_truth: &[Vec<usize>],
    background: Option<usize>,
    decoder: &str,
) -> EvalReport {
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for ((id, p), g) in ids.iter().zip(predictions).zip(ground_truth) {
        match evaluate(p, g, background) {
            Ok(m) => records.push(VideoRecord {
                id: id.clone(),
                frames: g.len(),
                metrics: m,
                online_offline_disagreement: None,
            }),
            Err(e) => failures.push(VideoFailure {
                id: id.clone(),
                error: e.to_string(),
            }),
        }
    }
    let metrics: Vec<VideoMetrics> = records.iter().map(|r| r.metrics).collect();
    EvalReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        decoder: decoder.into(),
        aggregate: aggregate(&metrics),
        online_offline_disagreement: None,
        videos: records,
        failures,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delay: String,
    pub metrics: AggregateMetrics,
}

/// Aggregate semi-online metrics for every delay. Each video is decoded
/// online and offline once; every delay then reads labels off those decodes.
pub fn sweep_delay(
    im: &InferenceModel<'_>,
    videos: &[EvalVideo],
    delays: &[Delay],
    background: Option<usize>,
) -> Result<Vec<SweepRow>> {
    let per_video: Vec<Vec<VideoMetrics>> = videos
        .par_iter()
        .map(|v| -> Result<Vec<VideoMetrics>> {
            let d = im.decode_all(&v.stream)?;
            delays
                .iter()
                .map(|delay| {
                    let labels = semi_online_labels(&d.online, &d.offline, delay.resolve(v.stream.num_frames()))?;
                    evaluate(&labels, &v.ground_truth, background)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(delays
        .iter()
        .enumerate()
        .map(|(k, delay)| {
            let m: Vec<VideoMetrics> = per_video.iter().map(|v| v[k]).collect();
            SweepRow {
                delay: delay.to_string(),
                metrics: aggregate(&m),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressPoint {
    pub fraction: f64,
    pub acc_bg: Option<f64>,
    pub acc: f64,
}

/// Accuracy of the online labels emitted up to frame `floor(f T)`, for each
/// observation endpoint `f` in `(0, 1]`.
pub fn progress_profile(
    im: &InferenceModel<'_>,
    videos: &[EvalVideo],
    endpoints: &[f64],
    background: Option<usize>,
) -> Result<Vec<ProgressPoint>> {
    if let Some(f) = endpoints.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(SegError::Config(format!("observation endpoint {f} outside (0, 1]")));
    }
    let per_video: Vec<Vec<VideoMetrics>> = videos
        .par_iter()
        .map(|v| -> Result<Vec<VideoMetrics>> {
            let scores = frame_log_likelihoods(&v.stream, im.durations)?;
            let online = online_decode_scores(&scores, im.durations, im.grammar, &im.online)?;
            if v.ground_truth.len() != online.labels.len() {
                return Err(SegError::Dimension {
                    what: "ground-truth frames",
                    expected: online.labels.len(),
                    got: v.ground_truth.len(),
                });
            }
            endpoints
                .iter()
                .map(|&f| {
                    let t = ((f * online.labels.len() as f64).floor() as usize).max(1);
                    evaluate(&online.labels[..t], &v.ground_truth[..t], background)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(endpoints
        .iter()
        .enumerate()
        .map(|(k, &fraction)| {
            let m: Vec<VideoMetrics> = per_video.iter().map(|v| v[k]).collect();
            let agg = aggregate(&m);
            ProgressPoint {
                fraction,
                acc_bg: agg.acc_bg,
                acc: agg.acc,
            }
        })
        .collect())
}
