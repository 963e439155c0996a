//! Multi-view pseudo-label fusion and the view-confidence network.

mod confidence;
mod fusion;

pub use confidence::{loss_view_confidence, ConfidenceConfig, ConfidenceNet, ViewConfidenceLoss};
pub use fusion::{fuse_pi, fuse_sv, fuse_weighted, fuse_wpi, MultiViewPair, SvDurationCounting};
