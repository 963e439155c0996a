//! Segment energies and the training losses built on them.
//!
//! All quantities are computed from a T x |A| matrix of frame log-posteriors
//! `ln p(a | x_t)` and all gradients are taken with respect to that matrix.
//! Pseudo-label paths (offline and online) are constants.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SegError};
use crate::types::{ProbabilityStream, SegmentPath};

/// Which relabelings of the valid path count as invalid paths.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvalidPathSet {
    /// Every segment carries a label different from the valid one. The sum
    /// over invalid paths factorizes per segment.
    #[default]
    AllSegmentsDiffer,
    /// At least one segment differs; all other segments keep the valid label.
    AnySegmentDiffers,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBreakdown {
    /// `ln e_n(a_n, l_n)` of each valid segment.
    pub per_segment_valid: Vec<f64>,
    /// Per segment, `(action, ln e_n^-(action))` for every action other than the valid one.
    pub per_segment_invalid: Vec<Vec<(usize, f64)>>,
    pub log_e_valid: f64,
    /// `ln` of the summed energy of all invalid paths.
    pub log_e_invalid_total: f64,
    invalid_set: InvalidPathSet,
    /// Whether each invalid entry took its own energy (true) or the constant 1.
    hard: Vec<Vec<bool>>,
    path: SegmentPath,
    num_actions: usize,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn check_path(log_post: &Array2<f64>, path: &SegmentPath, what: &'static str) -> Result<()> {
    if path.total_frames() != log_post.nrows() {
        return Err(SegError::Dimension {
            what,
            expected: log_post.nrows(),
            got: path.total_frames(),
        });
    }
    if let Some(s) = path.segments().iter().find(|s| s.action >= log_post.ncols()) {
        return Err(SegError::Precondition(format!("path action {} out of range", s.action)));
    }
    Ok(())
}

/// Valid and hard-invalid segment energies of `path` under `log_post`.
///
/// An invalid action only counts with its own energy when that energy exceeds
/// the valid action's energy on the segment; otherwise it contributes 1.
pub fn segment_energies(
    log_post: &Array2<f64>,
    path: &SegmentPath,
    invalid_set: InvalidPathSet,
) -> Result<EnergyBreakdown> {
    check_path(log_post, path, "path frames")?;
    let n_act = log_post.ncols();
    if n_act < 2 {
        return Err(SegError::Precondition("invalid paths need at least two actions".into()));
    }
    let mut per_segment_valid = Vec::with_capacity(path.num_segments());
    let mut per_segment_invalid = Vec::with_capacity(path.num_segments());
    let mut hard = Vec::with_capacity(path.num_segments());
    let mut t0 = 0;
    for seg in path.segments() {
        let mut energy = vec![0.0; n_act];
        for t in t0..t0 + seg.len {
            for (e, lp) in energy.iter_mut().zip(log_post.row(t)) {
                *e += lp;
            }
        }
        let valid = energy[seg.action];
        per_segment_valid.push(valid);
        let others = (0..n_act).filter(|&a| a != seg.action);
        per_segment_invalid.push(
            others
                .clone()
                .map(|a| (a, if energy[a] > valid { energy[a] } else { 0.0 }))
                .collect::<Vec<_>>(),
        );
        hard.push(others.map(|a| energy[a] > valid).collect());
        t0 += seg.len;
    }
    let log_e_valid: f64 = per_segment_valid.iter().sum();
    let log_e_invalid_total = match invalid_set {
        InvalidPathSet::AllSegmentsDiffer => per_segment_invalid
            .iter()
            .map(|inv| log_sum_exp(inv.iter().map(|&(_, v)| v)))
            .sum(),
        InvalidPathSet::AnySegmentDiffers => {
            let all: f64 = per_segment_invalid
                .iter()
                .zip(&per_segment_valid)
                .map(|(inv, &v)| log_sum_exp(inv.iter().map(|&(_, x)| x).chain(std::iter::once(v))))
                .sum();
            // ln(exp(all) - exp(valid)); the difference is strictly positive
            all + (-(log_e_valid - all).exp()).ln_1p()
        }
    };
    Ok(EnergyBreakdown {
        per_segment_valid,
        per_segment_invalid,
        log_e_valid,
        log_e_invalid_total,
        invalid_set,
        hard,
        path: path.clone(),
        num_actions: n_act,
    })
}

/// Margin loss between the valid path and the hard-invalid paths:
/// `L_b = -ln E(valid) + ln sum E(invalid)`, with its gradient.
pub fn loss_baseline(b: &EnergyBreakdown) -> (f64, Array2<f64>) {
    let value = -b.log_e_valid + b.log_e_invalid_total;
    let t_len = b.path.total_frames();
    let mut grad = Array2::<f64>::zeros((t_len, b.num_actions));
    // Q / P with ln(P - Q) = log_e_invalid_total and ln Q = log_e_valid
    let ratio = 1.0 / (1.0 + (b.log_e_invalid_total - b.log_e_valid).exp());
    let mut coef = vec![0.0; b.num_actions];
    let mut t0 = 0;
    for (n, seg) in b.path.segments().iter().enumerate() {
        coef.iter_mut().for_each(|c| *c = 0.0);
        let inv = &b.per_segment_invalid[n];
        let hard = &b.hard[n];
        let valid = b.per_segment_valid[n];
        match b.invalid_set {
            InvalidPathSet::AllSegmentsDiffer => {
                let lse = log_sum_exp(inv.iter().map(|&(_, v)| v));
                for (&(a, v), &h) in inv.iter().zip(hard) {
                    if h {
                        coef[a] = (v - lse).exp();
                    }
                }
                coef[seg.action] = -1.0;
            }
            InvalidPathSet::AnySegmentDiffers => {
                let lse = log_sum_exp(inv.iter().map(|&(_, v)| v).chain(std::iter::once(valid)));
                let scale = 1.0 / (1.0 - ratio);
                for (&(a, v), &h) in inv.iter().zip(hard) {
                    if h {
                        coef[a] = (v - lse).exp() * scale;
                    }
                }
                coef[seg.action] = ((valid - lse).exp() - ratio) * scale - 1.0;
            }
        }
        for t in t0..t0 + seg.len {
            for (g, c) in grad.row_mut(t).iter_mut().zip(&coef) {
                *g += c;
            }
        }
        t0 += seg.len;
    }
    (value, grad)
}

/// Online-offline discrepancy loss.
///
/// For every time `t`, the log-energy of the online prefix path inferred at
/// `t` is compared with the log-energy of the first `t` frames of the offline
/// path; positive differences are averaged as `d_t / t` and summed. Returns
/// the value, its (sub)gradient and the smallest `|difference|` over the
/// times where the paths differ, which is the distance to the nearest hinge
/// kink. Identical prefixes give a difference of exactly zero.
pub fn loss_oodl(
    log_post: &Array2<f64>,
    offline_path: &SegmentPath,
    online_paths: &[SegmentPath],
) -> Result<(f64, Array2<f64>, f64)> {
    check_path(log_post, offline_path, "offline path frames")?;
    let (t_len, n_act) = log_post.dim();
    if online_paths.len() != t_len {
        return Err(SegError::Dimension {
            what: "online paths",
            expected: t_len,
            got: online_paths.len(),
        });
    }
    let offline = offline_path.expand();
    let mut value = 0.0;
    let mut min_margin = f64::INFINITY;
    let mut on_diff = vec![vec![0.0; t_len + 1]; n_act];
    let mut off_weight = vec![0.0; t_len + 1];
    for (i, path) in online_paths.iter().enumerate() {
        let t = i + 1;
        if path.total_frames() != t {
            return Err(SegError::Dimension {
                what: "online path frames",
                expected: t,
                got: path.total_frames(),
            });
        }
        // frame-wise so that agreeing frames contribute exactly zero
        let mut diff = 0.0;
        let mut differs = false;
        let mut s = 0;
        for seg in path.segments() {
            if seg.action >= n_act {
                return Err(SegError::Precondition(format!(
                    "online action {} out of range",
                    seg.action
                )));
            }
            for tau in s..s + seg.len {
                if offline[tau] != seg.action {
                    differs = true;
                    diff += log_post[[tau, seg.action]] - log_post[[tau, offline[tau]]];
                }
            }
            s += seg.len;
        }
        if differs {
            min_margin = min_margin.min(diff.abs());
        }
        if diff > 0.0 {
            let w = 1.0 / t as f64;
            value += diff * w;
            let mut s = 0;
            for seg in path.segments() {
                on_diff[seg.action][s] += w;
                on_diff[seg.action][s + seg.len] -= w;
                s += seg.len;
            }
            off_weight[t] += w;
        }
    }

    let mut grad = Array2::<f64>::zeros((t_len, n_act));
    for (a, d) in on_diff.iter().enumerate() {
        let mut run = 0.0;
        for t in 0..t_len {
            run += d[t];
            grad[[t, a]] = run;
        }
    }
    // frame tau receives -1/t from every active t > tau (1-based t >= tau + 1)
    let mut tail = 0.0;
    for tau in (0..t_len).rev() {
        tail += off_weight[tau + 1];
        grad[[tau, offline[tau]]] -= tail;
    }
    Ok((value, grad, min_margin))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossConfig {
    pub use_oodl: bool,
    pub invalid_set: InvalidPathSet,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            use_oodl: true,
            invalid_set: InvalidPathSet::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub l_b: f64,
    pub l_oodl: f64,
    pub l_total: f64,
    /// dL / d ln p(a | x_t).
    pub grad_log_posterior: Array2<f64>,
    /// Distance of the closest OODL hinge argument from zero (infinite when OODL is off).
    pub oodl_margin: f64,
}

/// `L_total = L_b + L_oodl` (the OODL term is zero when disabled).
pub fn loss_total(
    log_post: &Array2<f64>,
    offline_path: &SegmentPath,
    online_paths: Option<&[SegmentPath]>,
    config: &LossConfig,
) -> Result<LossReport> {
    let b = segment_energies(log_post, offline_path, config.invalid_set)?;
    let (l_b, mut grad) = loss_baseline(&b);
    let (l_oodl, oodl_margin) = match (config.use_oodl, online_paths) {
        (true, Some(paths)) => {
            let (v, g, m) = loss_oodl(log_post, offline_path, paths)?;
            grad += &g;
            (v, m)
        }
        (true, None) => {
            return Err(SegError::Precondition("OODL enabled but no online paths given".into()));
        }
        (false, _) => (0.0, f64::INFINITY),
    };
    Ok(LossReport {
        l_b,
        l_oodl,
        l_total: l_b + l_oodl,
        grad_log_posterior: grad,
        oodl_margin,
    })
}

/// Convenience wrapper over a probability stream.
pub fn loss_total_stream(
    stream: &ProbabilityStream,
    offline_path: &SegmentPath,
    online_paths: Option<&[SegmentPath]>,
    config: &LossConfig,
) -> Result<LossReport> {
    loss_total(&stream.log_posteriors(), offline_path, online_paths, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_posteriors_hit_the_constant_branch() {
        let lp = Array2::from_elem((5, 3), (1.0f64 / 3.0).ln());
        let path = SegmentPath::from_pairs(&[(0, 2), (2, 3)]).unwrap();
        let b = segment_energies(&lp, &path, InvalidPathSet::AllSegmentsDiffer).unwrap();
        for inv in &b.per_segment_invalid {
            assert!(inv.iter().all(|&(_, v)| v == 0.0));
        }
        assert!((b.log_e_invalid_total - 2.0 * 2f64.ln()).abs() < 1e-12);
        let (l, g) = loss_baseline(&b);
        assert!((l - (5.0 * 3f64.ln() + 2.0 * 2f64.ln())).abs() < 1e-12);
        assert_eq!(g[[0, 0]], -1.0);
        assert_eq!(g[[0, 1]], 0.0);
    }

    #[test]
    fn perfect_classifier() {
        let p = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 1.0, 0.0]];
        let s = ProbabilityStream::new(p).unwrap();
        let path = SegmentPath::from_pairs(&[(0, 1), (1, 2)]).unwrap();
        let b = segment_energies(&s.log_posteriors(), &path, InvalidPathSet::AllSegmentsDiffer).unwrap();
        assert_eq!(b.log_e_valid, 0.0);
        let (l, g) = loss_baseline(&b);
        assert!((l - 2.0 * 2f64.ln()).abs() < 1e-12);
        for t in 0..3 {
            assert_eq!(g[[t, path.label_at(t).unwrap()]], -1.0);
        }
    }

    #[test]
    fn hard_invalid_case_split_by_hand() {
        // segment frames 0..3, valid action 0
        let p = array![[0.5, 0.5], [0.2, 0.8], [0.6, 0.4]];
        let lp = p.mapv(f64::ln);
        let path = SegmentPath::from_pairs(&[(0, 3)]).unwrap();
        let b = segment_energies(&lp, &path, InvalidPathSet::AllSegmentsDiffer).unwrap();
        let e0 = (0.5f64 * 0.2 * 0.6).ln();
        let e1 = (0.5f64 * 0.8 * 0.4).ln();
        assert!((b.per_segment_valid[0] - e0).abs() < 1e-12);
        assert!((b.per_segment_invalid[0][0].1 - e1).abs() < 1e-12);
        let (l, _) = loss_baseline(&b);
        assert!((l - (e1 - e0)).abs() < 1e-12);
    }

    #[test]
    fn oodl_single_frame() {
        let lp = array![[0.6f64.ln(), 0.4f64.ln()]];
        let off = SegmentPath::from_pairs(&[(1, 1)]).unwrap();
        let on = vec![SegmentPath::from_pairs(&[(0, 1)]).unwrap()];
        let (l, g, _) = loss_oodl(&lp, &off, &on).unwrap();
        assert!((l - 1.5f64.ln()).abs() < 1e-12);
        assert_eq!(g[[0, 0]], 1.0);
        assert_eq!(g[[0, 1]], -1.0);
    }

    #[test]
    fn oodl_zero_on_prefix_consistent_paths() {
        let lp = array![
            [0.3f64.ln(), 0.7f64.ln()],
            [0.9f64.ln(), 0.1f64.ln()],
            [0.5f64.ln(), 0.5f64.ln()]
        ];
        let off = SegmentPath::from_pairs(&[(1, 1), (0, 2)]).unwrap();
        let labels = off.expand();
        let on: Vec<_> = (1..=3).map(|t| SegmentPath::from_labels(&labels[..t])).collect();
        let (l, g, _) = loss_oodl(&lp, &off, &on).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn total_without_oodl_is_baseline() {
        let lp = array![[0.3f64.ln(), 0.7f64.ln()], [0.9f64.ln(), 0.1f64.ln()]];
        let off = SegmentPath::from_pairs(&[(1, 1), (0, 1)]).unwrap();
        let cfg = LossConfig {
            use_oodl: false,
            ..LossConfig::default()
        };
        let r = loss_total(&lp, &off, None, &cfg).unwrap();
        assert_eq!(r.l_total, r.l_b);
        assert!(loss_total(&lp, &off, None, &LossConfig::default()).is_err());
    }

    #[test]
    fn length_mismatch_errors() {
        let lp = array![[0.3f64.ln(), 0.7f64.ln()]];
        let off = SegmentPath::from_pairs(&[(1, 2)]).unwrap();
        assert!(segment_energies(&lp, &off, InvalidPathSet::AllSegmentsDiffer).is_err());
        let off = SegmentPath::from_pairs(&[(1, 1)]).unwrap();
        assert!(loss_oodl(&lp, &off, &[]).is_err());
    }
}
