//! Poisson duration scores and the per-action duration model.

use statrs::function::gamma::ln_gamma;

use crate::error::{Result, SegError};
use crate::types::SegmentPath;

/// `ln Poisson(l; lambda) = l ln(lambda) - lambda - ln(l!)`.
///
/// `l = 0` is accepted so that the pmf can be summed over its full support;
/// decoders only ever call it with `l >= 1`.
pub fn poisson_log_pmf(l: usize, lambda: f64) -> Result<f64> {
    if lambda <= 0.0 || !lambda.is_finite() {
        return Err(SegError::Precondition(format!("lambda must be positive, got {lambda}")));
    }
    Ok(poisson_unchecked(l, lambda.ln(), lambda, ln_factorial(l)))
}

/// Duration score of an unfinished segment: `ln 1 = 0` while `l < lambda`,
/// the full Poisson log-pmf afterwards.
pub fn half_poisson_log(l: usize, lambda: f64) -> Result<f64> {
    if l == 0 {
        return Err(SegError::Precondition("segment length must be >= 1".into()));
    }
    if (l as f64) < lambda {
        // still validates lambda
        poisson_log_pmf(l, lambda).map(|_| 0.0)
    } else {
        poisson_log_pmf(l, lambda)
    }
}

#[inline]
pub fn ln_factorial(l: usize) -> f64 {
    ln_gamma(l as f64 + 1.0)
}

#[inline]
fn poisson_unchecked(l: usize, ln_lambda: f64, lambda: f64, ln_fact: f64) -> f64 {
    l as f64 * ln_lambda - lambda - ln_fact
}

/// Per-action mean segment lengths and class priors.
#[derive(Debug, Clone, PartialEq)]
pub struct DurationModel {
    lambda: Vec<f64>,
    class_prior: Vec<f64>,
}

impl DurationModel {
    pub fn new(lambda: Vec<f64>, class_prior: Vec<f64>) -> Result<Self> {
        if lambda.len() != class_prior.len() {
            return Err(SegError::Dimension {
                what: "class priors",
                expected: lambda.len(),
                got: class_prior.len(),
            });
        }
        if lambda.is_empty() {
            return Err(SegError::Precondition("duration model has no actions".into()));
        }
        if let Some(l) = lambda.iter().find(|l| **l <= 0.0 || !l.is_finite()) {
            return Err(SegError::Precondition(format!("lambda must be positive, got {l}")));
        }
        if let Some(p) = class_prior.iter().find(|p| **p <= 0.0 || !p.is_finite()) {
            return Err(SegError::Precondition(format!("class prior must be positive, got {p}")));
        }
        let sum: f64 = class_prior.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SegError::Precondition(format!("class priors sum to {sum}")));
        }
        Ok(DurationModel { lambda, class_prior })
    }

    /// Same mean length for every action and a uniform prior.
    pub fn uniform(num_actions: usize, lambda: f64) -> Result<Self> {
        Self::new(vec![lambda; num_actions], vec![1.0 / num_actions as f64; num_actions])
    }

    /// Initial model before any pseudo-labels exist:
    /// `lambda = mean video length / mean transcript length` for every action.
    pub fn initial(num_actions: usize, video_lengths: &[usize], transcript_lengths: &[usize]) -> Result<Self> {
        Self::uniform(num_actions, default_lambda(video_lengths, transcript_lengths)?)
    }

    pub fn num_actions(&self) -> usize {
        self.lambda.len()
    }

    pub fn lambda(&self, a: usize) -> f64 {
        self.lambda[a]
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambda
    }

    pub fn prior(&self, a: usize) -> f64 {
        self.class_prior[a]
    }

    pub fn priors(&self) -> &[f64] {
        &self.class_prior
    }
}

fn default_lambda(video_lengths: &[usize], transcript_lengths: &[usize]) -> Result<f64> {
    if video_lengths.is_empty() || transcript_lengths.is_empty() {
        return Err(SegError::Precondition(
            "cannot derive default lambda from an empty dataset".into(),
        ));
    }
    let mean_t = video_lengths.iter().sum::<usize>() as f64 / video_lengths.len() as f64;
    let mean_m = transcript_lengths.iter().sum::<usize>() as f64 / transcript_lengths.len() as f64;
    Ok((mean_t / mean_m).max(1.0))
}

/// Floors every prior at `1 / (10 |A|)` and renormalizes.
pub fn floor_priors(raw: &[f64]) -> Vec<f64> {
    let floor = 1.0 / (10.0 * raw.len() as f64);
    let floored: Vec<f64> = raw.iter().map(|p| p.max(floor)).collect();
    let sum: f64 = floored.iter().sum();
    floored.into_iter().map(|p| p / sum).collect()
}

/// Re-estimates lambda (mean pseudo-label segment length per action) and
/// class priors (frame frequency, floored) from per-video paths.
///
/// Actions never seen in `paths` fall back to the dataset default
/// `mean video length / mean number of segments`.
pub fn estimate_duration_model(paths: &[SegmentPath], num_actions: usize) -> Result<DurationModel> {
    if paths.is_empty() || paths.iter().all(|p| p.num_segments() == 0) {
        return Err(SegError::Precondition(
            "no pseudo-label paths to estimate durations from".into(),
        ));
    }
    let mut len_sum = vec![0usize; num_actions];
    let mut seg_count = vec![0usize; num_actions];
    for p in paths {
        for s in p.segments() {
            if s.action >= num_actions {
                return Err(SegError::Precondition(format!(
                    "path action {} out of range for {num_actions} actions",
                    s.action
                )));
            }
            len_sum[s.action] += s.len;
            seg_count[s.action] += 1;
        }
    }
    let video_lengths: Vec<usize> = paths.iter().map(|p| p.total_frames()).collect();
    let seg_lengths: Vec<usize> = paths.iter().map(|p| p.num_segments()).collect();
    let fallback = default_lambda(&video_lengths, &seg_lengths)?;
    let lambda = (0..num_actions)
        .map(|a| {
            if seg_count[a] > 0 {
                len_sum[a] as f64 / seg_count[a] as f64
            } else {
                fallback
            }
        })
        .collect();
    let total: usize = len_sum.iter().sum();
    let raw: Vec<f64> = len_sum.iter().map(|&n| n as f64 / total as f64).collect();
    DurationModel::new(lambda, floor_priors(&raw))
}

/// Cached duration scorer for the decoders' inner loops. `ln(l!)` is
/// tabulated once per length so repeated evaluations are table lookups.
#[derive(Debug, Clone)]
pub struct DurationScorer {
    lambda: Vec<f64>,
    ln_lambda: Vec<f64>,
    ln_fact: Vec<f64>,
}

impl DurationScorer {
    pub fn new(dm: &DurationModel, max_len: usize) -> Self {
        let mut s = DurationScorer {
            lambda: dm.lambda.clone(),
            ln_lambda: dm.lambda.iter().map(|l| l.ln()).collect(),
            ln_fact: Vec::new(),
        };
        s.reserve(max_len);
        s
    }

    /// Extends the factorial table to cover lengths up to `max_len`.
    pub fn reserve(&mut self, max_len: usize) {
        for l in self.ln_fact.len()..=max_len {
            self.ln_fact.push(ln_factorial(l));
        }
    }

    #[inline]
    pub fn poisson(&self, action: usize, l: usize) -> f64 {
        poisson_unchecked(l, self.ln_lambda[action], self.lambda[action], self.ln_fact[l])
    }

    #[inline]
    pub fn half_poisson(&self, action: usize, l: usize) -> f64 {
        if (l as f64) < self.lambda[action] {
            0.0
        } else {
            self.poisson(action, l)
        }
    }
}
