//! Weakly-supervised online and offline temporal action segmentation.
//!
//! The crate provides grammar-constrained semi-Markov decoders (offline,
//! incremental online, greedy and fixed-delay), the energy-based training
//! losses including the online-offline discrepancy loss, multi-view
//! pseudo-label fusion, a small linear frame classifier with its training
//! loop, evaluation metrics, a synthetic multi-view benchmark generator with
//! its file formats, and brute-force oracles for the decoders.

pub mod check;
pub mod classifier;
pub mod dataset;
pub mod decode;
pub mod duration;
pub mod energy;
pub mod error;
pub mod eval;
pub mod grammar;
pub mod io;
pub mod metrics;
pub mod multiview;
pub mod oracle;
pub mod scores;
pub mod synth;
pub mod train;
pub mod types;

pub use duration::{estimate_duration_model, half_poisson_log, poisson_log_pmf, DurationModel};
pub use error::{Result, SegError};
pub use grammar::Grammar;
pub use scores::posterior_to_log_likelihood;
pub use types::{ActionSet, ProbabilityStream, Segment, SegmentPath, Transcript, ViewAdjacency};
