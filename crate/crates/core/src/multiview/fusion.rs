use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::decode::{decode_scores, Decoded};
use crate::duration::DurationModel;
use crate::error::{Result, SegError};
use crate::grammar::Grammar;
use crate::multiview::ConfidenceNet;
use crate::scores::frame_log_likelihoods;
use crate::types::ProbabilityStream;

/// Anchor and auxiliary views of one recording, frame-synchronized.
#[derive(Debug, Clone, Copy)]
pub struct MultiViewPair<'a> {
    pub anchor: &'a ProbabilityStream,
    pub auxiliary: &'a ProbabilityStream,
    pub anchor_features: ArrayView2<'a, f64>,
    pub auxiliary_features: ArrayView2<'a, f64>,
}

impl<'a> MultiViewPair<'a> {
    pub fn new(
        anchor: &'a ProbabilityStream,
        auxiliary: &'a ProbabilityStream,
        anchor_features: ArrayView2<'a, f64>,
        auxiliary_features: ArrayView2<'a, f64>,
    ) -> Result<Self> {
        check_pair(anchor, auxiliary)?;
        for (what, f) in [
            ("anchor feature rows", &anchor_features),
            ("auxiliary feature rows", &auxiliary_features),
        ] {
            if f.nrows() != anchor.num_frames() {
                return Err(SegError::Dimension {
                    what,
                    expected: anchor.num_frames(),
                    got: f.nrows(),
                });
            }
        }
        if anchor_features.ncols() != auxiliary_features.ncols() {
            return Err(SegError::Dimension {
                what: "auxiliary feature width",
                expected: anchor_features.ncols(),
                got: auxiliary_features.ncols(),
            });
        }
        Ok(MultiViewPair {
            anchor,
            auxiliary,
            anchor_features,
            auxiliary_features,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.anchor.num_frames()
    }
}

pub(crate) fn check_pair(anchor: &ProbabilityStream, auxiliary: &ProbabilityStream) -> Result<()> {
    if anchor.num_frames() != auxiliary.num_frames() {
        return Err(SegError::Dimension {
            what: "auxiliary frames",
            expected: anchor.num_frames(),
            got: auxiliary.num_frames(),
        });
    }
    if anchor.num_actions() != auxiliary.num_actions() {
        return Err(SegError::Dimension {
            what: "auxiliary actions",
            expected: anchor.num_actions(),
            got: auxiliary.num_actions(),
        });
    }
    Ok(())
}

/// How sequence voting counts the duration terms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SvDurationCounting {
    /// Literal product of the two sequence posteriors: durations counted once per view.
    #[default]
    PerView,
    /// One shared duration prior.
    Shared,
}

fn summed_scores(anchor: &ProbabilityStream, auxiliary: &ProbabilityStream, dm: &DurationModel) -> Result<Array2<f64>> {
    check_pair(anchor, auxiliary)?;
    Ok(frame_log_likelihoods(anchor, dm)? + frame_log_likelihoods(auxiliary, dm)?)
}

/// Sequence voting: the path maximizing the product of both views' sequence posteriors.
pub fn fuse_sv(
    anchor: &ProbabilityStream,
    auxiliary: &ProbabilityStream,
    dm: &DurationModel,
    g: &Grammar,
    counting: SvDurationCounting,
) -> Result<Decoded> {
    let scores = summed_scores(anchor, auxiliary, dm)?;
    let weight = match counting {
        SvDurationCounting::PerView => 2.0,
        SvDurationCounting::Shared => 1.0,
    };
    decode_scores(&scores, dm, g, weight)
}

/// Probabilistic inference: frame likelihoods multiplied across views, durations counted once.
pub fn fuse_pi(
    anchor: &ProbabilityStream,
    auxiliary: &ProbabilityStream,
    dm: &DurationModel,
    g: &Grammar,
) -> Result<Decoded> {
    let scores = summed_scores(anchor, auxiliary, dm)?;
    decode_scores(&scores, dm, g, 1.0)
}

/// Weighted probabilistic inference with an explicit per-frame weight profile:
/// frame term `c_t ln p(x_t^i | a) + (1 - c_t) ln p(x_t^j | a)`.
pub fn fuse_weighted(
    anchor: &ProbabilityStream,
    auxiliary: &ProbabilityStream,
    c: &[f64],
    dm: &DurationModel,
    g: &Grammar,
) -> Result<Decoded> {
    check_pair(anchor, auxiliary)?;
    if c.len() != anchor.num_frames() {
        return Err(SegError::Dimension {
            what: "confidence profile",
            expected: anchor.num_frames(),
            got: c.len(),
        });
    }
    if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(SegError::Precondition("confidence weights must lie in [0, 1]".into()));
    }
    let la = frame_log_likelihoods(anchor, dm)?;
    let lb = frame_log_likelihoods(auxiliary, dm)?;
    let mut scores = la;
    for ((mut row, rb), &ct) in scores.rows_mut().into_iter().zip(lb.rows()).zip(c) {
        row.zip_mut_with(&rb, |x, &y| *x = ct * *x + (1.0 - ct) * y);
    }
    decode_scores(&scores, dm, g, 1.0)
}

/// Weighted probabilistic inference with weights from the confidence network.
pub fn fuse_wpi(
    pair: &MultiViewPair<'_>,
    net: &ConfidenceNet,
    dm: &DurationModel,
    g: &Grammar,
) -> Result<(Decoded, Vec<f64>)> {
    let c = net.forward(pair.anchor_features, pair.auxiliary_features)?;
    let d = fuse_weighted(pair.anchor, pair.auxiliary, &c, dm, g)?;
    Ok((d, c))
}
