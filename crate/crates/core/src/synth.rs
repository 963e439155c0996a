//! Synthetic multi-view benchmark with shared ground truth per recording.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Split, Video};
use crate::error::{Result, SegError};
use crate::types::{ActionSet, SegmentPath, Transcript};

/// Span `[start, end)` of a view, as fractions of the video, whose features carry no class signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occlusion {
    pub view: usize,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Actions other than background.
    pub num_actions: usize,
    /// Add a background action at the start and end of every transcript.
    pub background: bool,
    pub num_transcripts: usize,
    pub min_transcript_len: usize,
    pub max_transcript_len: usize,
    pub recordings_per_transcript: usize,
    pub views: usize,
    /// Per-action Poisson mean segment lengths are drawn uniformly from this range.
    pub min_mean_len: f64,
    pub max_mean_len: f64,
    pub background_mean_len: f64,
    pub feature_dim: usize,
    /// Standard deviation of each prototype coordinate.
    pub separation: f64,
    /// Standard deviation of the isotropic feature noise.
    pub noise: f64,
    pub occlusion: Vec<Occlusion>,
    /// Fraction of each transcript's recordings held out for testing.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_actions: 6,
            background: true,
            num_transcripts: 4,
            min_transcript_len: 3,
            max_transcript_len: 5,
            recordings_per_transcript: 6,
            views: 2,
            min_mean_len: 8.0,
            max_mean_len: 16.0,
            background_mean_len: 6.0,
            feature_dim: 12,
            separation: 1.2,
            noise: 1.0,
            occlusion: Vec::new(),
            test_fraction: 1.0 / 3.0,
            seed: 0,
        }
    }
}

/// Generated data plus everything needed to evaluate it.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    /// Ground-truth path of each video, aligned with `dataset.videos`.
    pub ground_truth: Vec<SegmentPath>,
    pub prototypes: Array2<f64>,
    /// Nearest-prototype accuracy on a held-out draw of unoccluded frames.
    pub bayes_accuracy: f64,
}

pub const BAYES_ACCURACY_FLOOR: f64 = 0.9;
const BAYES_SAMPLES: usize = 4000;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SegError::Config(m.to_string()));
        if self.num_actions < 2 {
            return bad("need at least two actions");
        }
        if self.min_transcript_len == 0 || self.min_transcript_len > self.max_transcript_len {
            return bad("transcript length range must satisfy 1 <= min <= max");
        }
        if self.max_transcript_len > self.num_actions {
            return bad("transcripts use distinct actions, so max length cannot exceed the action count");
        }
        if self.num_transcripts == 0 || self.recordings_per_transcript == 0 || self.views == 0 {
            return bad("transcripts, recordings and views must be positive");
        }
        if !(self.min_mean_len >= 1.0 && self.min_mean_len <= self.max_mean_len && self.background_mean_len >= 1.0) {
            return bad("mean segment lengths must be >= 1 and min <= max");
        }
        if self.feature_dim == 0
            || self.separation <= 0.0
            || !self.separation.is_finite()
            || self.noise <= 0.0
            || !self.noise.is_finite()
        {
            return bad("feature dimension, separation and noise must be positive");
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return bad("test fraction must lie in [0, 1)");
        }
        for o in &self.occlusion {
            if o.view >= self.views || !(0.0 <= o.start && o.start < o.end && o.end <= 1.0) {
                return Err(SegError::Config(format!(
                    "occlusion {}:{}:{} must name an existing view and satisfy 0 <= start < end <= 1",
                    o.view, o.start, o.end
                )));
            }
        }
        Ok(())
    }
}

fn nearest(prototypes: &Array2<f64>, x: &Array1<f64>) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (a, p) in prototypes.rows().into_iter().enumerate() {
        let d: f64 = p.iter().zip(x).map(|(u, v)| (u - v) * (u - v)).sum();
        if d < best.0 {
            best = (d, a);
        }
    }
    best.1
}

fn sample_len(dist: &Poisson<f64>, rng: &mut ChaCha8Rng) -> usize {
    (dist.sample(rng) as usize).max(1)
}

pub fn generate(config: &SynthConfig) -> Result<Synthetic> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut names: Vec<String> = (0..config.num_actions).map(|a| format!("a{a}")).collect();
    if config.background {
        names.push("bg".into());
    }
    let mut actions = ActionSet::new(names)?;
    if config.background {
        actions = actions.with_background("bg")?;
    }
    let n_total = actions.len();
    let bg = actions.background();

    let proto_dist = Normal::new(0.0, config.separation).expect("positive separation");
    let prototypes = Array2::from_shape_simple_fn((n_total, config.feature_dim), || proto_dist.sample(&mut rng));
    let noise = Normal::new(0.0, config.noise).expect("positive noise");

    let bayes_accuracy = {
        let mut hits = 0;
        for _ in 0..BAYES_SAMPLES {
            let a = rng.random_range(0..n_total);
            let x = Array1::from_shape_fn(config.feature_dim, |f| prototypes[[a, f]] + noise.sample(&mut rng));
            hits += usize::from(nearest(&prototypes, &x) == a);
        }
        hits as f64 / BAYES_SAMPLES as f64
    };
    if bayes_accuracy <= BAYES_ACCURACY_FLOOR {
        return Err(SegError::Config(format!(
            "classes are not separable enough: nearest-prototype accuracy {bayes_accuracy:.3} <= {BAYES_ACCURACY_FLOOR}"
        )));
    }

    let mut lambda: Vec<f64> = (0..config.num_actions)
        .map(|_| rng.random_range(config.min_mean_len..=config.max_mean_len))
        .collect();
    if config.background {
        lambda.push(config.background_mean_len);
    }
    let len_dist: Vec<Poisson<f64>> = lambda
        .iter()
        .map(|&l| Poisson::new(l).expect("positive mean"))
        .collect();

    let mut transcripts: Vec<Vec<usize>> = Vec::new();
    let mut attempts = 0;
    while transcripts.len() < config.num_transcripts {
        attempts += 1;
        if attempts > 10_000 {
            return Err(SegError::Config("cannot draw enough distinct transcripts".into()));
        }
        let m = rng.random_range(config.min_transcript_len..=config.max_transcript_len);
        let mut pool: Vec<usize> = (0..config.num_actions).collect();
        pool.shuffle(&mut rng);
        let mut tr = pool[..m].to_vec();
        if let Some(b) = bg {
            tr.insert(0, b);
            tr.push(b);
        }
        if !transcripts.contains(&tr) {
            transcripts.push(tr);
        }
    }

    let n_rec = config.recordings_per_transcript;
    let n_test = ((n_rec as f64) * config.test_fraction).round() as usize;
    let n_train = n_rec.saturating_sub(n_test).max(1);
    let mut videos = Vec::new();
    let mut ground_truth = Vec::new();
    let mut rec_idx = 0;
    for tr in &transcripts {
        for r in 0..n_rec {
            let split = if r < n_train { Split::Train } else { Split::Test };
            let pairs: Vec<(usize, usize)> = tr.iter().map(|&a| (a, sample_len(&len_dist[a], &mut rng))).collect();
            let path = SegmentPath::from_pairs(&pairs)?;
            let labels = path.expand();
            let t_len = labels.len();
            let recording = format!("r{rec_idx:03}");
            for view in 0..config.views {
                let mut features = Array2::zeros((t_len, config.feature_dim));
                for (t, &a) in labels.iter().enumerate() {
                    let frac = t as f64 / t_len as f64;
                    let occluded = config
                        .occlusion
                        .iter()
                        .any(|o| o.view == view && frac >= o.start && frac < o.end);
                    for f in 0..config.feature_dim {
                        let signal = if occluded { 0.0 } else { prototypes[[a, f]] };
                        features[[t, f]] = signal + noise.sample(&mut rng);
                    }
                }
                videos.push(Video {
                    id: format!("{recording}_v{view}"),
                    recording: recording.clone(),
                    split,
                    transcript: Transcript::new(tr.clone())?,
                    features,
                });
                ground_truth.push(path.clone());
            }
            rec_idx += 1;
        }
    }
    Ok(Synthetic {
        dataset: Dataset::new(actions, videos)?,
        ground_truth,
        prototypes,
        bayes_accuracy,
    })
}
