//! Brute-force reference decoders.
//!
//! Every function here enumerates all grammar-consistent segmentations of a
//! small instance and scores each one straight from its formula. Nothing is
//! shared with the dynamic programs except the Poisson primitives and the
//! posterior to likelihood conversion.

use std::cmp::Ordering;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::duration::{half_poisson_log, poisson_log_pmf, DurationModel};
use crate::error::{Result, SegError};
use crate::grammar::{Grammar, NodeId, ROOT};
use crate::scores::posterior_to_log_likelihood;
use crate::types::{cmp_scores, ProbabilityStream, SegmentPath, Transcript};

/// Limits that keep enumeration tractable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationBudget {
    pub max_t: usize,
    pub max_transcript_len: usize,
    pub max_transcripts: usize,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        EnumerationBudget {
            max_t: 12,
            max_transcript_len: 4,
            max_transcripts: 3,
        }
    }
}

pub const MAX_CANDIDATES: u128 = 1_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

impl EnumerationBudget {
    pub fn check(&self, t_len: usize, g: &Grammar) -> Result<()> {
        if t_len > self.max_t {
            return Err(SegError::Budget(format!("{t_len} frames > {}", self.max_t)));
        }
        if g.transcripts().len() > self.max_transcripts {
            return Err(SegError::Budget(format!(
                "{} transcripts > {}",
                g.transcripts().len(),
                self.max_transcripts
            )));
        }
        if g.max_transcript_len() > self.max_transcript_len {
            return Err(SegError::Budget(format!(
                "transcript length {} > {}",
                g.max_transcript_len(),
                self.max_transcript_len
            )));
        }
        let count: u128 = g
            .transcripts()
            .iter()
            .map(|tr| binomial(t_len.saturating_sub(1), tr.len().saturating_sub(1)))
            .sum();
        if count >= MAX_CANDIDATES {
            return Err(SegError::Budget(format!("{count} candidate segmentations")));
        }
        Ok(())
    }
}

/// All ways to write `total` as an ordered sum of `parts` positive integers.
pub fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, parts: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for first in 1..=left.saturating_sub(parts - 1) {
            cur.push(first);
            rec(left - first, parts - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if parts == 0 || parts > total {
        return out;
    }
    rec(total, parts, &mut Vec::with_capacity(parts), &mut out);
    out
}

fn node_of(g: &Grammar, actions: &[usize]) -> NodeId {
    actions
        .iter()
        .fold(ROOT, |n, &a| g.child(n, a).expect("sequence comes from the grammar"))
}

/// A scored candidate; ordering implements the documented tie-break.
#[derive(Debug, Clone)]
struct Candidate {
    score: f64,
    actions: Vec<usize>,
    lengths: Vec<usize>,
    node: NodeId,
}

impl Candidate {
    /// True when `self` should replace `best`.
    fn beats(&self, best: &Candidate) -> bool {
        match cmp_scores(self.score, best.score) {
            Ordering::Greater => return true,
            Ordering::Less => return false,
            Ordering::Equal => {}
        }
        let key = |c: &Candidate| (*c.actions.last().unwrap(), *c.lengths.last().unwrap(), c.node);
        let (ka, kb) = (key(self), key(best));
        if ka != kb {
            return ka < kb;
        }
        // same final node and length: shorter earlier segments, last to first
        let rev = |c: &Candidate| c.lengths.iter().rev().copied().collect::<Vec<_>>();
        rev(self) < rev(best)
    }

    fn path(&self) -> SegmentPath {
        let pairs: Vec<(usize, usize)> = self.actions.iter().copied().zip(self.lengths.iter().copied()).collect();
        SegmentPath::from_pairs(&pairs).expect("compositions are positive")
    }
}

/// Frame log-likelihood of action `a` at frame `t`, evaluated directly.
fn frame_ll(stream: &ProbabilityStream, dm: &DurationModel, t: usize, a: usize) -> f64 {
    posterior_to_log_likelihood(stream.row(t)[a], dm.prior(a)).expect("stream rows are probabilities")
}

/// How candidate frames are scored in the fusion objectives.
#[derive(Debug, Clone, PartialEq)]
pub enum FusionObjective {
    /// Product of the two single-view sequence posteriors: both views' frame
    /// terms and the duration terms counted once per view.
    SequenceVoting,
    /// Product of frame likelihoods; duration terms counted once.
    Probabilistic,
    /// Per-frame geometric weighting `c_t` anchor, `1 - c_t` auxiliary.
    Weighted(Vec<f64>),
}

fn enumerate_full<F>(t_len: usize, g: &Grammar, frame_term: F, dur_weight: f64, lambda: &[f64]) -> Result<Candidate>
where
    F: Fn(usize, usize) -> f64,
{
    let mut best: Option<Candidate> = None;
    for tr in g.transcripts() {
        let node = node_of(g, tr.actions());
        for lengths in compositions(t_len, tr.len()) {
            let mut score = 0.0;
            let mut t = 0;
            for (&a, &l) in tr.actions().iter().zip(&lengths) {
                for tau in t..t + l {
                    score += frame_term(tau, a);
                }
                score += dur_weight * poisson_log_pmf(l, lambda[a])?;
                t += l;
            }
            let c = Candidate {
                score,
                actions: tr.actions().to_vec(),
                lengths,
                node,
            };
            if best.as_ref().is_none_or(|b| c.beats(b)) {
                best = Some(c);
            }
        }
    }
    best.ok_or_else(|| SegError::Infeasible(format!("no transcript fits in {t_len} frames")))
}

/// Exhaustive maximizer of the offline objective.
pub fn brute_offline(
    stream: &ProbabilityStream,
    dm: &DurationModel,
    g: &Grammar,
    budget: &EnumerationBudget,
) -> Result<(SegmentPath, f64)> {
    let t_len = stream.num_frames();
    budget.check(t_len, g)?;
    let best = enumerate_full(t_len, g, |t, a| frame_ll(stream, dm, t, a), 1.0, dm.lambdas())?;
    Ok((best.path(), best.score))
}

/// Exhaustive maximizer of a two-view fusion objective.
pub fn brute_fusion(
    anchor: &ProbabilityStream,
    auxiliary: &ProbabilityStream,
    dm: &DurationModel,
    g: &Grammar,
    objective: &FusionObjective,
    budget: &EnumerationBudget,
) -> Result<(SegmentPath, f64)> {
    let t_len = anchor.num_frames();
    if auxiliary.num_frames() != t_len {
        return Err(SegError::Dimension {
            what: "auxiliary frames",
            expected: t_len,
            got: auxiliary.num_frames(),
        });
    }
    budget.check(t_len, g)?;
    let both = |t: usize, a: usize| frame_ll(anchor, dm, t, a) + frame_ll(auxiliary, dm, t, a);
    let best = match objective {
        FusionObjective::SequenceVoting => enumerate_full(t_len, g, both, 2.0, dm.lambdas())?,
        FusionObjective::Probabilistic => enumerate_full(t_len, g, both, 1.0, dm.lambdas())?,
        FusionObjective::Weighted(c) => {
            if c.len() != t_len {
                return Err(SegError::Dimension {
                    what: "confidence profile",
                    expected: t_len,
                    got: c.len(),
                });
            }
            enumerate_full(
                t_len,
                g,
                |t, a| c[t] * frame_ll(anchor, dm, t, a) + (1.0 - c[t]) * frame_ll(auxiliary, dm, t, a),
                1.0,
                dm.lambdas(),
            )?
        }
    };
    Ok((best.path(), best.score))
}

/// Distinct non-empty prefixes of the grammar's transcripts.
fn all_prefixes(g: &Grammar) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = g
        .transcripts()
        .iter()
        .flat_map(|tr| (1..=tr.len()).map(move |k| tr.actions()[..k].to_vec()))
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Exhaustive maximizer of the online objective after observing the first
/// `t` frames of `stream`: half-Poisson on the open last segment, full
/// Poisson on closed segments. Returns the current label, the best prefix
/// path and its score.
pub fn brute_online(
    stream: &ProbabilityStream,
    t: usize,
    dm: &DurationModel,
    g: &Grammar,
    budget: &EnumerationBudget,
) -> Result<(usize, SegmentPath, f64)> {
    if t == 0 || t > stream.num_frames() {
        return Err(SegError::Precondition(format!("prefix length {t} out of range")));
    }
    budget.check(t, g)?;
    let mut best: Option<Candidate> = None;
    for prefix in all_prefixes(g) {
        let node = node_of(g, &prefix);
        for lengths in compositions(t, prefix.len()) {
            let mut score = 0.0;
            let mut start = 0;
            let last = prefix.len() - 1;
            for (n, (&a, &l)) in prefix.iter().zip(&lengths).enumerate() {
                for tau in start..start + l {
                    score += frame_ll(stream, dm, tau, a);
                }
                score += if n == last {
                    half_poisson_log(l, dm.lambda(a))?
                } else {
                    poisson_log_pmf(l, dm.lambda(a))?
                };
                start += l;
            }
            let c = Candidate {
                score,
                actions: prefix.clone(),
                lengths,
                node,
            };
            if best.as_ref().is_none_or(|b| c.beats(b)) {
                best = Some(c);
            }
        }
    }
    let best = best.ok_or_else(|| SegError::Infeasible("grammar admits no prefix".into()))?;
    Ok((*best.actions.last().unwrap(), best.path(), best.score))
}

/// Online labels for every prefix length of `stream`.
pub fn brute_online_labels(
    stream: &ProbabilityStream,
    dm: &DurationModel,
    g: &Grammar,
    budget: &EnumerationBudget,
) -> Result<Vec<usize>> {
    (1..=stream.num_frames())
        .map(|t| brute_online(stream, t, dm, g, budget).map(|r| r.0))
        .collect()
}

/// Central-difference gradient of `f` at `x`.
pub fn finite_difference<F>(f: F, x: &Array2<f64>, h: f64) -> Array2<f64>
where
    F: Fn(&Array2<f64>) -> f64,
{
    let mut grad = Array2::zeros(x.dim());
    let mut probe = x.clone();
    for (idx, g) in grad.indexed_iter_mut() {
        let orig = probe[idx];
        probe[idx] = orig + h;
        let up = f(&probe);
        probe[idx] = orig - h;
        let down = f(&probe);
        probe[idx] = orig;
        *g = (up - down) / (2.0 * h);
    }
    grad
}

/// Largest coordinate-wise `|a - n| / max(1, |a|, |n|)`.
pub fn max_relative_error(analytic: &Array2<f64>, numeric: &Array2<f64>) -> f64 {
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| (a - n).abs() / 1f64.max(a.abs()).max(n.abs()))
        .fold(0.0, f64::max)
}

/// Shape of the random small instances used by the oracle checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceFamily {
    pub max_t: usize,
    pub max_actions: usize,
    pub max_transcripts: usize,
    pub max_transcript_len: usize,
}

impl Default for InstanceFamily {
    fn default() -> Self {
        InstanceFamily {
            max_t: 10,
            max_actions: 4,
            max_transcripts: 3,
            max_transcript_len: 3,
        }
    }
}

/// A random decoding instance with two synchronized views.
#[derive(Debug, Clone)]
pub struct Instance {
    pub anchor: ProbabilityStream,
    pub auxiliary: ProbabilityStream,
    pub durations: DurationModel,
    pub grammar: Grammar,
}

fn random_stream(rng: &mut impl Rng, t_len: usize, n_act: usize) -> ProbabilityStream {
    // exponentiated uniforms give rows of varied sharpness
    let sharp: f64 = rng.random_range(0.5..4.0);
    let raw = Array2::from_shape_fn((t_len, n_act), |_| (sharp * rng.random_range(-1.0..1.0f64)).exp());
    ProbabilityStream::from_unnormalized(raw).expect("positive rows")
}

pub fn random_instance(rng: &mut impl Rng, family: &InstanceFamily) -> Instance {
    let n_act = rng.random_range(2..=family.max_actions);
    let n_tr = rng.random_range(1..=family.max_transcripts);
    let transcripts: Vec<Transcript> = (0..n_tr)
        .map(|_| {
            let m = rng.random_range(1..=family.max_transcript_len);
            Transcript::new((0..m).map(|_| rng.random_range(0..n_act)).collect()).unwrap()
        })
        .collect();
    let grammar = Grammar::new(transcripts).unwrap();
    let t_len = rng.random_range(grammar.min_transcript_len().max(1)..=family.max_t);
    let lambda: Vec<f64> = (0..n_act).map(|_| rng.random_range(0.5..6.0)).collect();
    let raw: Vec<f64> = (0..n_act).map(|_| rng.random_range(0.2..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    let durations = DurationModel::new(lambda, raw.iter().map(|p| p / sum).collect()).unwrap();
    Instance {
        anchor: random_stream(rng, t_len, n_act),
        auxiliary: random_stream(rng, t_len, n_act),
        durations,
        grammar,
    }
}

/// Deterministic instance stream for seed `seed`.
pub fn instances(seed: u64, count: usize, family: InstanceFamily) -> impl Iterator<Item = Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(move |_| random_instance(&mut rng, &family))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn composition_counts() {
        assert_eq!(compositions(4, 2), vec![vec![1, 3], vec![2, 2], vec![3, 1]]);
        assert_eq!(compositions(5, 1), vec![vec![5]]);
        assert!(compositions(2, 3).is_empty());
        for t in 1..9 {
            for m in 1..=t {
                assert_eq!(compositions(t, m).len() as u128, binomial(t - 1, m - 1));
            }
        }
    }

    #[test]
    fn single_transcript_of_one_action() {
        let s = ProbabilityStream::new(array![[0.3, 0.7], [0.6, 0.4], [0.5, 0.5]]).unwrap();
        let dm = DurationModel::uniform(2, 2.0).unwrap();
        let g = Grammar::new([Transcript::new(vec![1]).unwrap()]).unwrap();
        let (p, _) = brute_offline(&s, &dm, &g, &EnumerationBudget::default()).unwrap();
        assert_eq!(p, SegmentPath::from_pairs(&[(1, 3)]).unwrap());
    }

    #[test]
    fn online_first_frame_candidates_are_first_actions() {
        let s = ProbabilityStream::new(array![[0.1, 0.2, 0.7]]).unwrap();
        let dm = DurationModel::uniform(3, 3.0).unwrap();
        let g = Grammar::new([Transcript::new(vec![0, 2]).unwrap(), Transcript::new(vec![1]).unwrap()]).unwrap();
        let (a, p, _) = brute_online(&s, 1, &dm, &g, &EnumerationBudget::default()).unwrap();
        assert_eq!(a, 1);
        assert_eq!(p.num_segments(), 1);
    }

    #[test]
    fn returned_path_dominates_all_candidates() {
        for inst in instances(3, 20, InstanceFamily::default()) {
            let b = EnumerationBudget::default();
            let (p, score) = brute_offline(&inst.anchor, &inst.durations, &inst.grammar, &b).unwrap();
            let t_len = inst.anchor.num_frames();
            assert_eq!(p.total_frames(), t_len);
            for tr in inst.grammar.transcripts() {
                for lengths in compositions(t_len, tr.len()) {
                    let mut s = 0.0;
                    let mut t = 0;
                    for (&a, &l) in tr.actions().iter().zip(&lengths) {
                        for tau in t..t + l {
                            s += frame_ll(&inst.anchor, &inst.durations, tau, a);
                        }
                        s += poisson_log_pmf(l, inst.durations.lambda(a)).unwrap();
                        t += l;
                    }
                    assert!(cmp_scores(score, s) != Ordering::Less);
                }
            }
        }
    }

    #[test]
    fn budget_limits() {
        let g = Grammar::new([Transcript::new(vec![0; 5]).unwrap()]).unwrap();
        assert!(EnumerationBudget::default().check(10, &g).is_err());
        let g = Grammar::new([Transcript::new(vec![0]).unwrap()]).unwrap();
        assert!(EnumerationBudget::default().check(13, &g).is_err());
        assert!(EnumerationBudget::default().check(12, &g).is_ok());
    }

    #[test]
    fn finite_difference_of_quadratic() {
        let x = array![[1.0, -2.0], [0.5, 3.0]];
        let fd = finite_difference(|m| m.iter().map(|v| v * v).sum(), &x, 1e-5);
        let exact = x.mapv(|v| 2.0 * v);
        assert!(max_relative_error(&exact, &fd) < 1e-8);
    }
}
