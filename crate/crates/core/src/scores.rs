//! Posterior to likelihood conversion for the decoders.
//!
//! Decoders consume a T x |A| matrix of frame log-likelihoods
//! `ln p(x_t | a) = ln p(a | x_t) - ln p(a) + const`.

use ndarray::Array2;

use crate::duration::DurationModel;
use crate::error::{Result, SegError};
use crate::types::{floored_ln, ProbabilityStream, PROB_FLOOR};

/// `ln(p_post) - ln(prior)` with both inputs floored at [`PROB_FLOOR`].
pub fn posterior_to_log_likelihood(p_post: f64, prior: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_post) || !(0.0..=1.0).contains(&prior) {
        return Err(SegError::Precondition(format!(
            "probabilities must lie in [0, 1], got posterior {p_post} and prior {prior}"
        )));
    }
    let (p, q) = (p_post.max(PROB_FLOOR), prior.max(PROB_FLOOR));
    let v = p.ln() - q.ln();
    if !v.is_finite() {
        return Err(SegError::Internal(format!("non-finite log-likelihood for {p} / {q}")));
    }
    Ok(v)
}

/// Bayes-converted frame log-likelihoods of a stream under `dm`'s priors.
pub fn frame_log_likelihoods(stream: &ProbabilityStream, dm: &DurationModel) -> Result<Array2<f64>> {
    if stream.num_actions() != dm.num_actions() {
        return Err(SegError::Dimension {
            what: "actions in duration model",
            expected: stream.num_actions(),
            got: dm.num_actions(),
        });
    }
    let ln_prior: Vec<f64> = dm.priors().iter().map(|&p| floored_ln(p)).collect();
    let mut out = stream.log_posteriors();
    for mut row in out.rows_mut() {
        for (v, lp) in row.iter_mut().zip(&ln_prior) {
            *v -= lp;
        }
    }
    Ok(out)
}
