//! Domain types shared by the decoders, losses and evaluators.
//!
//! Actions are referred to by index everywhere except at I/O boundaries;
//! [`ActionSet`] owns the name to index mapping.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView1};

use crate::error::{Result, SegError};

/// Floor applied to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Tolerance on row sums of a [`ProbabilityStream`].
pub const ROW_SUM_TOL: f64 = 1e-6;

/// Scores closer than `TIE_TOLERANCE * max(1, |score|)` are treated as
/// ties and resolved by the documented tie-break instead of by rounding noise.
pub const TIE_TOLERANCE: f64 = 1e-10;

/// Compares two scores: `Greater` when `a` is better beyond the tie band,
/// `Equal` inside it.
#[inline]
pub fn cmp_scores(a: f64, b: f64) -> std::cmp::Ordering {
    let tol = TIE_TOLERANCE * 1f64.max(a.abs()).max(b.abs());
    if a > b + tol {
        std::cmp::Ordering::Greater
    } else if a < b - tol {
        std::cmp::Ordering::Less
    } else {
        std::cmp::Ordering::Equal
    }
}

#[inline]
pub fn floored_ln(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

/// Ordered set of action labels with an optional background member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSet {
    labels: Vec<String>,
    background: Option<usize>,
    index: HashMap<String, usize>,
}

impl ActionSet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(SegError::Precondition("action set is empty".into()));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() {
                return Err(SegError::Precondition(format!("action {i} has an empty label")));
            }
            if l.chars().any(|c| c.is_whitespace() || c == ',' || c == '=') {
                return Err(SegError::Precondition(format!(
                    "action label {l:?} contains whitespace, ',' or '='"
                )));
            }
            if index.insert(l.clone(), i).is_some() {
                return Err(SegError::Precondition(format!("duplicate action label {l:?}")));
            }
        }
        Ok(ActionSet {
            labels,
            background: None,
            index,
        })
    }

    pub fn with_background(mut self, label: &str) -> Result<Self> {
        let idx = self
            .index_of(label)
            .ok_or_else(|| SegError::Precondition(format!("background {label:?} is not an action")))?;
        self.background = Some(idx);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.labels[idx]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn background(&self) -> Option<usize> {
        self.background
    }
}

/// Ordered action sequence of a video; the only supervision available in training.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Transcript(Vec<usize>);

impl Transcript {
    pub fn new(actions: Vec<usize>) -> Result<Self> {
        if actions.is_empty() {
            return Err(SegError::Precondition(
                "transcript must have at least one action".into(),
            ));
        }
        Ok(Transcript(actions))
    }

    /// Checks every index against `num_actions`.
    pub fn validate(&self, num_actions: usize) -> Result<()> {
        match self.0.iter().find(|&&a| a >= num_actions) {
            Some(a) => Err(SegError::Precondition(format!(
                "transcript action {a} out of range for {num_actions} actions"
            ))),
            None => Ok(()),
        }
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Segment {
    pub action: usize,
    pub len: usize,
}

/// Alternating (action, duration) sequence covering `total_frames` frames.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SegmentPath {
    segments: Vec<Segment>,
    total_frames: usize,
}

impl SegmentPath {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if let Some(s) = segments.iter().find(|s| s.len == 0) {
            return Err(SegError::Precondition(format!(
                "segment of action {} has zero duration",
                s.action
            )));
        }
        let total_frames = segments.iter().map(|s| s.len).sum();
        Ok(SegmentPath { segments, total_frames })
    }

    pub fn from_pairs(pairs: &[(usize, usize)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(action, len)| Segment { action, len }).collect())
    }

    /// Run-length compression of frame labels; equal neighbours are merged.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut segments: Vec<Segment> = Vec::new();
        for &a in labels {
            match segments.last_mut() {
                Some(s) if s.action == a => s.len += 1,
                _ => segments.push(Segment { action: a, len: 1 }),
            }
        }
        SegmentPath {
            segments,
            total_frames: labels.len(),
        }
    }

    /// Compresses `labels` splitting only at the given segment start frames.
    pub fn from_labels_with_starts(labels: &[usize], starts: &[usize]) -> Result<Self> {
        let mut bounds: Vec<usize> = starts.to_vec();
        bounds.push(labels.len());
        if bounds.first() != Some(&0) && !labels.is_empty() {
            return Err(SegError::Precondition("first segment must start at frame 0".into()));
        }
        let mut segments = Vec::with_capacity(starts.len());
        for w in bounds.windows(2) {
            let (s, e) = (w[0], w[1]);
            if e <= s || e > labels.len() {
                return Err(SegError::Precondition(format!("bad segment bounds [{s}, {e})")));
            }
            let a = labels[s];
            if labels[s..e].iter().any(|&x| x != a) {
                return Err(SegError::Precondition(format!("labels in [{s}, {e}) are not constant")));
            }
            segments.push(Segment { action: a, len: e - s });
        }
        Self::new(segments)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn total_frames(&self) -> usize {
        self.total_frames
    }

    pub fn actions(&self) -> Vec<usize> {
        self.segments.iter().map(|s| s.action).collect()
    }

    /// 0-based start frame of every segment.
    pub fn starts(&self) -> Vec<usize> {
        let mut acc = 0;
        self.segments
            .iter()
            .map(|s| {
                let start = acc;
                acc += s.len;
                start
            })
            .collect()
    }

    pub fn expand(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.total_frames);
        for s in &self.segments {
            out.extend(std::iter::repeat_n(s.action, s.len));
        }
        out
    }

    /// Label of 0-based frame `t`.
    pub fn label_at(&self, t: usize) -> Option<usize> {
        let mut end = 0;
        for s in &self.segments {
            end += s.len;
            if t < end {
                return Some(s.action);
            }
        }
        None
    }

    pub fn push(&mut self, action: usize, len: usize) {
        debug_assert!(len > 0);
        self.segments.push(Segment { action, len });
        self.total_frames += len;
    }
}

/// T x |A| matrix of per-frame class posteriors p(a | x_t).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityStream {
    posteriors: Array2<f64>,
}

impl ProbabilityStream {
    pub fn new(posteriors: Array2<f64>) -> Result<Self> {
        for (t, row) in posteriors.rows().into_iter().enumerate() {
            if let Some(p) = row.iter().find(|p| **p < 0.0 || !p.is_finite()) {
                return Err(SegError::Precondition(format!(
                    "posterior {p} at frame {t} is negative or not finite"
                )));
            }
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(SegError::Precondition(format!("posterior row {t} sums to {sum}")));
            }
        }
        if posteriors.ncols() == 0 {
            return Err(SegError::Precondition("stream has no actions".into()));
        }
        Ok(ProbabilityStream { posteriors })
    }

    /// Normalizes each row of non-negative scores to sum to one.
    pub fn from_unnormalized(mut scores: Array2<f64>) -> Result<Self> {
        for (t, mut row) in scores.rows_mut().into_iter().enumerate() {
            let sum: f64 = row.sum();
            if sum <= 0.0 || !sum.is_finite() {
                return Err(SegError::Precondition(format!(
                    "row {t} has non-positive or non-finite mass {sum}"
                )));
            }
            row.mapv_inplace(|v| v / sum);
        }
        Self::new(scores)
    }

    pub fn num_frames(&self) -> usize {
        self.posteriors.nrows()
    }

    pub fn num_actions(&self) -> usize {
        self.posteriors.ncols()
    }

    pub fn posteriors(&self) -> &Array2<f64> {
        &self.posteriors
    }

    pub fn row(&self, t: usize) -> ArrayView1<'_, f64> {
        self.posteriors.row(t)
    }

    /// Floored natural-log posteriors.
    pub fn log_posteriors(&self) -> Array2<f64> {
        self.posteriors.mapv(floored_ln)
    }

    /// First `t` frames.
    pub fn truncated(&self, t: usize) -> ProbabilityStream {
        ProbabilityStream {
            posteriors: self.posteriors.slice(ndarray::s![..t, ..]).to_owned(),
        }
    }
}

/// Symmetric, zero-diagonal K x K view adjacency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewAdjacency {
    k: usize,
    adjacent: Vec<Vec<usize>>,
}

impl ViewAdjacency {
    /// Builds adjacency from per-video recording ids: videos sharing a
    /// recording are adjacent; frame counts must agree within a recording.
    pub fn from_recordings(recordings: &[&str], frame_counts: &[usize]) -> Result<Self> {
        if recordings.len() != frame_counts.len() {
            return Err(SegError::Dimension {
                what: "frame counts per video",
                expected: recordings.len(),
                got: frame_counts.len(),
            });
        }
        let k = recordings.len();
        let mut adjacent = vec![Vec::new(); k];
        for i in 0..k {
            for j in 0..k {
                if i != j && recordings[i] == recordings[j] {
                    if frame_counts[i] != frame_counts[j] {
                        return Err(SegError::Precondition(format!(
                            "videos {i} and {j} share recording {:?} but have {} and {} frames",
                            recordings[i], frame_counts[i], frame_counts[j]
                        )));
                    }
                    adjacent[i].push(j);
                }
            }
        }
        Ok(ViewAdjacency { k, adjacent })
    }

    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacent[i].contains(&j)
    }

    /// Indices of the other views of video `i`'s recording, ascending.
    pub fn neighbours(&self, i: usize) -> &[usize] {
        &self.adjacent[i]
    }

    pub fn has_any_edge(&self) -> bool {
        self.adjacent.iter().any(|a| !a.is_empty())
    }

    pub fn matrix(&self) -> Vec<Vec<u8>> {
        (0..self.k)
            .map(|i| (0..self.k).map(|j| self.is_adjacent(i, j) as u8).collect())
            .collect()
    }
}
