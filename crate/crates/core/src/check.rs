//! Cross-checks of the dynamic programs against the brute-force oracles on
//! seeded random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decode::{offline_decode, OnlineDecoder};
use crate::duration::half_poisson_log;
use crate::error::Result;
use crate::multiview::{fuse_pi, fuse_sv, fuse_weighted, SvDurationCounting};
use crate::oracle::{
    brute_fusion, brute_offline, brute_online, instances, EnumerationBudget, FusionObjective, InstanceFamily,
};

/// Largest log-score gap accepted between a decoder and its oracle.
pub const SCORE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckTally {
    pub check: String,
    pub instances: usize,
    pub failures: usize,
    pub worst_score_gap: f64,
    pub first_failure: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheckReport {
    pub seed: u64,
    pub checks: Vec<CheckTally>,
}

impl OracleCheckReport {
    pub fn failures(&self) -> usize {
        self.checks.iter().map(|c| c.failures).sum()
    }

    pub fn tally(&self, check: &str) -> Option<&CheckTally> {
        self.checks.iter().find(|c| c.check == check)
    }
}

pub const CHECKS: [&str; 8] = [
    "offline",
    "online",
    "sv",
    "pi",
    "wpi-c0",
    "wpi-c0.5",
    "wpi-c1",
    "wpi-random",
];

/// `(path matches, score gap)` per check for one instance.
type Outcome = [(bool, f64); 8];

fn check_one(inst: &crate::oracle::Instance, profile_seed: u64, budget: &EnumerationBudget) -> Result<Outcome> {
    let (a, b, dm, g) = (&inst.anchor, &inst.auxiliary, &inst.durations, &inst.grammar);
    let t_len = a.num_frames();
    let mut out = [(true, 0.0); 8];

    let dp = offline_decode(a, dm, g, None)?;
    let (path, score) = brute_offline(a, dm, g, budget)?;
    out[0] = (dp.path == path, (dp.log_score - score).abs());

    let mut dec = OnlineDecoder::new(dm, g)?;
    let mut ok = true;
    let mut gap: f64 = 0.0;
    for t in 1..=t_len {
        let emitted = dec.step_posteriors(a.row(t - 1))?;
        let best = dec
            .frontier()
            .iter()
            .map(|h| Ok(h.log_score + half_poisson_log(h.segment_len, dm.lambda(h.action))?))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        let (label, path, score) = brute_online(a, t, dm, g, budget)?;
        ok &= emitted == label && dec.current_path() == path;
        gap = gap.max((best - score).abs());
    }
    out[1] = (ok, gap);

    let sv = fuse_sv(a, b, dm, g, SvDurationCounting::PerView)?;
    let (path, score) = brute_fusion(a, b, dm, g, &FusionObjective::SequenceVoting, budget)?;
    out[2] = (sv.path == path, (sv.log_score - score).abs());

    let pi = fuse_pi(a, b, dm, g)?;
    let (path, score) = brute_fusion(a, b, dm, g, &FusionObjective::Probabilistic, budget)?;
    out[3] = (pi.path == path, (pi.log_score - score).abs());

    let mut rng = ChaCha8Rng::seed_from_u64(profile_seed);
    let random: Vec<f64> = (0..t_len).map(|_| rng.random_range(0.0..=1.0)).collect();
    let profiles = [vec![0.0; t_len], vec![0.5; t_len], vec![1.0; t_len], random];
    for (k, c) in profiles.into_iter().enumerate() {
        let w = fuse_weighted(a, b, &c, dm, g)?;
        let (path, score) = brute_fusion(a, b, dm, g, &FusionObjective::Weighted(c), budget)?;
        out[4 + k] = (w.path == path, (w.log_score - score).abs());
    }
    Ok(out)
}

/// Runs every check on `count` instances drawn from `family` with `seed`.
pub fn run_oracle_checks(
    seed: u64,
    count: usize,
    family: InstanceFamily,
    budget: &EnumerationBudget,
) -> Result<OracleCheckReport> {
    let insts: Vec<_> = instances(seed, count, family).collect();
    let outcomes: Vec<Outcome> = insts
        .par_iter()
        .enumerate()
        .map(|(i, inst)| check_one(inst, seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15), budget))
        .collect::<Result<_>>()?;
    let checks = CHECKS
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let mut tally = CheckTally {
                check: name.to_string(),
                instances: outcomes.len(),
                failures: 0,
                worst_score_gap: 0.0,
                first_failure: None,
            };
            for (i, o) in outcomes.iter().enumerate() {
                let (path_ok, gap) = o[k];
                tally.worst_score_gap = tally.worst_score_gap.max(gap);
                if !path_ok || gap > SCORE_TOLERANCE {
                    tally.failures += 1;
                    tally.first_failure.get_or_insert(i);
                }
            }
            tally
        })
        .collect();
    Ok(OracleCheckReport { seed, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_is_clean_and_deterministic() {
        let budget = EnumerationBudget::default();
        let a = run_oracle_checks(5, 40, InstanceFamily::default(), &budget).unwrap();
        assert_eq!(a.failures(), 0, "{a:?}");
        assert_eq!(a.checks.len(), CHECKS.len());
        assert_eq!(a, run_oracle_checks(5, 40, InstanceFamily::default(), &budget).unwrap());
    }
}
