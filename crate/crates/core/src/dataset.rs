//! In-memory weakly labelled dataset.

use ndarray::Array2;

use crate::error::{Result, SegError};
use crate::grammar::Grammar;
use crate::types::{ActionSet, Transcript, ViewAdjacency};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// One view of one recording. Ground-truth labels are deliberately absent.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub id: String,
    pub recording: String,
    pub split: Split,
    pub transcript: Transcript,
    /// `T x F1`.
    pub features: Array2<f64>,
}

impl Video {
    pub fn num_frames(&self) -> usize {
        self.features.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub actions: ActionSet,
    pub videos: Vec<Video>,
}

impl Dataset {
    pub fn new(actions: ActionSet, videos: Vec<Video>) -> Result<Self> {
        let mut width = None;
        for v in &videos {
            v.transcript.validate(actions.len())?;
            match width {
                None => width = Some(v.features.ncols()),
                Some(w) if w != v.features.ncols() => {
                    return Err(SegError::Dimension {
                        what: "feature width",
                        expected: w,
                        got: v.features.ncols(),
                    })
                }
                _ => {}
            }
        }
        let ds = Dataset { actions, videos };
        ds.adjacency()?;
        Ok(ds)
    }

    pub fn feature_dim(&self) -> usize {
        self.videos.first().map_or(0, |v| v.features.ncols())
    }

    pub fn split(&self, split: Split) -> Dataset {
        Dataset {
            actions: self.actions.clone(),
            videos: self.videos.iter().filter(|v| v.split == split).cloned().collect(),
        }
    }

    /// Videos sharing a recording id are adjacent views.
    pub fn adjacency(&self) -> Result<ViewAdjacency> {
        let recs: Vec<&str> = self.videos.iter().map(|v| v.recording.as_str()).collect();
        let lens: Vec<usize> = self.videos.iter().map(Video::num_frames).collect();
        ViewAdjacency::from_recordings(&recs, &lens)
    }

    /// Grammar over the transcripts of all videos.
    pub fn grammar(&self) -> Result<Grammar> {
        Grammar::new(self.videos.iter().map(|v| v.transcript.clone()))
    }
}
